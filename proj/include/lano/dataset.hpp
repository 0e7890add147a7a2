#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "lano/grid.hpp"
#include "lano/kv.hpp"
#include "lano/serialize.hpp"
#include "lano/tensor.hpp"

// Dataset directory layout: a "key = value" manifest next to one tensor file
// per split and field. Split files are rank-3 [samples x points x channels]
// records in the tensor serialization format, so external benchmark data can
// be converted in with nothing more than a tensor writer. Grid keys are
// optional; point-cloud data simply omits them (which disables the DWC
// branch downstream).

namespace lano {

struct DatasetInfo {
    std::size_t samples = 0;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    std::size_t points = 0;  // N, tokens per sample
    std::size_t d_x = 0;
    std::size_t d_a = 0;
    std::size_t d_u = 0;
    std::optional<GridShape> grid;
    Dtype dtype = Dtype::f64;
    // File names relative to the manifest directory.
    std::string train_x, train_a, train_u;
    std::string test_x, test_a, test_u;
};

template <typename T>
struct Sample {
    Tensor<T> x;  // [N x d_x]
    Tensor<T> a;  // [N x d_a], empty when d_a == 0
    Tensor<T> u;  // [N x d_u]
};

template <typename T>
struct NormStats {
    Tensor<T> x_mean, x_std;
    Tensor<T> a_mean, a_std;  // empty when d_a == 0
    Tensor<T> u_mean, u_std;
};

template <typename T>
struct Dataset {
    DatasetInfo info;
    std::vector<Sample<T>> train;
    std::vector<Sample<T>> test;
    NormStats<T> stats;  // train-split statistics (loaded or computed)
};

inline std::string manifest_path(const std::string& dir) {
    return (std::filesystem::path(dir) / "manifest.txt").string();
}

kv::Map manifest_to_kv(const DatasetInfo& info);
DatasetInfo manifest_from_kv(const kv::Map& m, const std::string& ctx);
void write_manifest(const DatasetInfo& info, const std::string& dir);

namespace detail {

/// Per-channel mean/std over every point of every listed tensor, computed in
/// double. Standard deviations are floored at 1e-6 so constant channels stay
/// harmless.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_stats(const std::vector<const Tensor<T>*>& fields) {
    const std::size_t c = fields.front()->dim(1);
    std::vector<double> mean(c, 0.0), sq(c, 0.0);
    std::size_t count = 0;
    for (const Tensor<T>* f : fields) {
        const std::size_t n = f->dim(0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const double v = static_cast<double>((*f)[i * c + j]);
                mean[j] += v;
                sq[j] += v * v;
            }
        count += n;
    }
    Tensor<T> m({c}), s({c});
    for (std::size_t j = 0; j < c; ++j) {
        const double mu = mean[j] / static_cast<double>(count);
        const double var = std::max(0.0, sq[j] / static_cast<double>(count) - mu * mu);
        m[j] = static_cast<T>(mu);
        s[j] = static_cast<T>(std::max(std::sqrt(var), 1e-6));
    }
    return {std::move(m), std::move(s)};
}

}  // namespace detail

template <typename T>
NormStats<T> compute_stats(const std::vector<Sample<T>>& train, std::size_t d_a) {
    NormStats<T> st;
    std::vector<const Tensor<T>*> xs, as, us;
    for (const auto& s : train) {
        xs.push_back(&s.x);
        if (d_a) as.push_back(&s.a);
        us.push_back(&s.u);
    }
    std::tie(st.x_mean, st.x_std) = detail::channel_stats(xs);
    if (d_a) std::tie(st.a_mean, st.a_std) = detail::channel_stats(as);
    std::tie(st.u_mean, st.u_std) = detail::channel_stats(us);
    return st;
}

namespace detail {

template <typename T>
std::vector<Sample<T>> unstack_split(const std::string& dir, const DatasetInfo& info,
                                     const std::string& x_file, const std::string& a_file,
                                     const std::string& u_file, std::size_t expect) {
    namespace fs = std::filesystem;
    auto load3 = [&](const std::string& name, std::size_t channels) {
        const std::string path = (fs::path(dir) / name).string();
        Tensor<T> t = load_tensor<T>(path);
        if (t.rank() != 3 || t.dim(0) != expect || t.dim(1) != info.points ||
            t.dim(2) != channels)
            throw IoError("dataset file '" + path + "' has shape " + shape_str(t.shape()) +
                          ", expected [" + std::to_string(expect) + "x" +
                          std::to_string(info.points) + "x" + std::to_string(channels) + "]");
        return t;
    };
    Tensor<T> xs = load3(x_file, info.d_x);
    Tensor<T> us = load3(u_file, info.d_u);
    Tensor<T> as;
    if (info.d_a) as = load3(a_file, info.d_a);
    std::vector<Sample<T>> out(expect);
    for (std::size_t s = 0; s < expect; ++s) {
        out[s].x = lano::reshape(lano::slice(xs, 0, s, 1), {info.points, info.d_x});
        out[s].u = lano::reshape(lano::slice(us, 0, s, 1), {info.points, info.d_u});
        if (info.d_a) out[s].a = lano::reshape(lano::slice(as, 0, s, 1), {info.points, info.d_a});
    }
    return out;
}

}  // namespace detail

/// Loads a dataset directory, validating every referenced file against the
/// manifest. Casts stored values to T. Normalization statistics are taken
/// from the manifest when present, otherwise computed on the train split.
template <typename T>
Dataset<T> load_dataset(const std::string& dir) {
    const std::string mpath = manifest_path(dir);
    std::ifstream is(mpath);
    if (!is) throw IoError("cannot open dataset manifest '" + mpath + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    kv::Map m = kv::parse(text, mpath);
    Dataset<T> ds;
    ds.info = manifest_from_kv(m, mpath);
    ds.train = detail::unstack_split<T>(dir, ds.info, ds.info.train_x, ds.info.train_a,
                                        ds.info.train_u, ds.info.train_samples);
    ds.test = detail::unstack_split<T>(dir, ds.info, ds.info.test_x, ds.info.test_a,
                                       ds.info.test_u, ds.info.test_samples);

    auto parse_stat = [&](const char* key, std::size_t channels) -> std::optional<Tensor<T>> {
        auto v = kv::get(m, key);
        if (!v) return std::nullopt;
        std::vector<T> vals;
        std::istringstream ss(*v);
        double x;
        while (ss >> x) vals.push_back(static_cast<T>(x));
        if (vals.size() != channels)
            throw ConfigError(mpath + ": key '" + std::string(key) + "' lists " +
                              std::to_string(vals.size()) + " values, expected " +
                              std::to_string(channels));
        return Tensor<T>({channels}, std::move(vals));
    };
    auto xm = parse_stat("norm_x_mean", ds.info.d_x), xs = parse_stat("norm_x_std", ds.info.d_x);
    auto um = parse_stat("norm_u_mean", ds.info.d_u), us = parse_stat("norm_u_std", ds.info.d_u);
    auto am = ds.info.d_a ? parse_stat("norm_a_mean", ds.info.d_a) : std::nullopt;
    auto as = ds.info.d_a ? parse_stat("norm_a_std", ds.info.d_a) : std::nullopt;
    const bool have_all = xm && xs && um && us && (!ds.info.d_a || (am && as));
    if (have_all) {
        ds.stats.x_mean = *xm;
        ds.stats.x_std = *xs;
        ds.stats.u_mean = *um;
        ds.stats.u_std = *us;
        if (ds.info.d_a) {
            ds.stats.a_mean = *am;
            ds.stats.a_std = *as;
        }
    } else {
        ds.stats = compute_stats(ds.train, ds.info.d_a);
    }
    return ds;
}

/// Writes a dataset directory (manifest + stacked split tensors) in the
/// dtype of T.
template <typename T>
void save_dataset(const Dataset<T>& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    DatasetInfo info = ds.info;
    info.dtype = dtype_of<T>::value;
    auto stack_and_write = [&](const std::vector<Sample<T>>& split, const std::string& name,
                               auto field, std::size_t channels) {
        std::vector<const Tensor<T>*> parts;
        std::vector<Tensor<T>> reshaped;
        reshaped.reserve(split.size());
        for (const auto& s : split)
            reshaped.push_back(lano::reshape(field(s), {std::size_t(1), info.points, channels}));
        for (const auto& t : reshaped) parts.push_back(&t);
        save_tensor((fs::path(dir) / name).string(), lano::concat(0, parts));
    };
    stack_and_write(ds.train, info.train_x, [](const Sample<T>& s) { return s.x; }, info.d_x);
    stack_and_write(ds.train, info.train_u, [](const Sample<T>& s) { return s.u; }, info.d_u);
    stack_and_write(ds.test, info.test_x, [](const Sample<T>& s) { return s.x; }, info.d_x);
    stack_and_write(ds.test, info.test_u, [](const Sample<T>& s) { return s.u; }, info.d_u);
    if (info.d_a) {
        stack_and_write(ds.train, info.train_a, [](const Sample<T>& s) { return s.a; }, info.d_a);
        stack_and_write(ds.test, info.test_a, [](const Sample<T>& s) { return s.a; }, info.d_a);
    }
    write_manifest(info, dir);
}

}  // namespace lano
