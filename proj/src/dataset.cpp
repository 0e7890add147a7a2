#include "lano/dataset.hpp"

#include <fstream>

namespace lano {

kv::Map manifest_to_kv(const DatasetInfo& info) {
    kv::Map m;
    m.emplace_back("format", "lano-dataset-v1");
    m.emplace_back("samples", std::to_string(info.samples));
    m.emplace_back("train_samples", std::to_string(info.train_samples));
    m.emplace_back("test_samples", std::to_string(info.test_samples));
    m.emplace_back("points", std::to_string(info.points));
    m.emplace_back("d_x", std::to_string(info.d_x));
    m.emplace_back("d_a", std::to_string(info.d_a));
    m.emplace_back("d_u", std::to_string(info.d_u));
    if (info.grid) {
        m.emplace_back("grid_h", std::to_string(info.grid->rows));
        m.emplace_back("grid_w", std::to_string(info.grid->cols));
    }
    m.emplace_back("dtype", dtype_name(info.dtype));
    m.emplace_back("train_x", info.train_x);
    if (info.d_a) m.emplace_back("train_a", info.train_a);
    m.emplace_back("train_u", info.train_u);
    m.emplace_back("test_x", info.test_x);
    if (info.d_a) m.emplace_back("test_a", info.test_a);
    m.emplace_back("test_u", info.test_u);
    return m;
}

DatasetInfo manifest_from_kv(const kv::Map& m, const std::string& ctx) {
    const std::string format = kv::require(m, "format", ctx);
    if (format != "lano-dataset-v1")
        throw ConfigError(ctx + ": unsupported dataset format '" + format + "'");
    DatasetInfo info;
    info.samples = kv::as_u64(kv::require(m, "samples", ctx), ctx);
    info.train_samples = kv::as_u64(kv::require(m, "train_samples", ctx), ctx);
    info.test_samples = kv::as_u64(kv::require(m, "test_samples", ctx), ctx);
    info.points = kv::as_u64(kv::require(m, "points", ctx), ctx);
    info.d_x = kv::as_u64(kv::require(m, "d_x", ctx), ctx);
    info.d_a = kv::as_u64(kv::require(m, "d_a", ctx), ctx);
    info.d_u = kv::as_u64(kv::require(m, "d_u", ctx), ctx);
    if (info.train_samples + info.test_samples != info.samples)
        throw ConfigError(ctx + ": train + test sample counts do not add up to 'samples'");
    const auto gh = kv::get(m, "grid_h");
    const auto gw = kv::get(m, "grid_w");
    if (gh.has_value() != gw.has_value())
        throw ConfigError(ctx + ": grid_h and grid_w must both be present or both absent");
    if (gh) {
        GridShape g{kv::as_u64(*gh, ctx), kv::as_u64(*gw, ctx)};
        if (g.points() != info.points)
            throw ConfigError(ctx + ": grid " + std::to_string(g.rows) + "x" +
                              std::to_string(g.cols) + " does not cover points = " +
                              std::to_string(info.points));
        info.grid = g;
    }
    info.dtype = dtype_from_name(kv::require(m, "dtype", ctx));
    info.train_x = kv::require(m, "train_x", ctx);
    info.train_u = kv::require(m, "train_u", ctx);
    info.test_x = kv::require(m, "test_x", ctx);
    info.test_u = kv::require(m, "test_u", ctx);
    if (info.d_a) {
        info.train_a = kv::require(m, "train_a", ctx);
        info.test_a = kv::require(m, "test_a", ctx);
    }
    return info;
}

void write_manifest(const DatasetInfo& info, const std::string& dir) {
    const std::string path = manifest_path(dir);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write manifest '" + path + "'");
    os << kv::format(manifest_to_kv(info));
    if (!os) throw IoError("failed writing manifest '" + path + "'");
}

}  // namespace lano
