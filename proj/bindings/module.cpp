// Python bindings for the main operations: attention kernels, the Darcy
// finite-volume solver and generator, losses, resampling, and checkpointed
// model inference. Heavy numeric types cross the boundary as numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "lano/attention.hpp"
#include "lano/darcy.hpp"
#include "lano/dataset.hpp"
#include "lano/gradcheck.hpp"
#include "lano/losses.hpp"
#include "lano/model.hpp"

namespace py = pybind11;

namespace {

template <typename T>
lano::Tensor<T> tensor_from_array(
    const py::array_t<T, py::array::c_style | py::array::forcecast>& arr) {
    lano::Shape shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i)
        shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arr.shape(i));
    std::vector<T> data(arr.data(), arr.data() + arr.size());
    return lano::Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
py::array_t<T> array_from_tensor(const lano::Tensor<T>& t) {
    std::vector<py::ssize_t> shape(t.rank());
    for (std::size_t i = 0; i < t.rank(); ++i)
        shape[i] = static_cast<py::ssize_t>(t.dim(i));
    py::array_t<T> out(shape);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

using ArrayF64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ArrayF32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

lano::LinearFeatureMap feature_map_from_name(const std::string& name) {
    if (name == "identity") return lano::LinearFeatureMap::identity;
    if (name == "elu_plus_one") return lano::LinearFeatureMap::elu_plus_one;
    throw lano::ConfigError("unknown feature map '" + name + "'");
}

std::optional<lano::GridShape> grid_from_arg(
    const std::optional<std::pair<std::size_t, std::size_t>>& g) {
    if (!g) return std::nullopt;
    return lano::GridShape{g->first, g->second};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "linear-attention neural operator toolkit (C++ core)";

    py::register_exception<lano::Error>(m, "LanoError", PyExc_RuntimeError);

    m.def(
        "softmax_attention",
        [](const ArrayF64& q, const ArrayF64& k, const ArrayF64& v, double scale) {
            return array_from_tensor(lano::softmax_attention(
                tensor_from_array(q), tensor_from_array(k), tensor_from_array(v), scale));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("scale"),
        "softmax(Q K^T * scale) V on one head");

    m.def(
        "linear_attention",
        [](const ArrayF64& q, const ArrayF64& k, const ArrayF64& v, const std::string& phi) {
            return array_from_tensor(lano::linear_attention(
                tensor_from_array(q), tensor_from_array(k), tensor_from_array(v),
                feature_map_from_name(phi)));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("phi") = "elu_plus_one",
        "phi(Q) (phi(K)^T V), right-to-left association");

    m.def(
        "agent_pool",
        [](const ArrayF64& q, std::size_t agents) {
            return array_from_tensor(lano::agent_pool(tensor_from_array(q), agents));
        },
        py::arg("q"), py::arg("agents"), "contiguous-segment mean pooling along tokens");

    m.def(
        "agent_attention_core",
        [](const ArrayF64& q, const ArrayF64& k, const ArrayF64& v, const ArrayF64& a,
           std::optional<ArrayF64> b1, std::optional<ArrayF64> b2, double scale) {
            return array_from_tensor(lano::agent_attention_core(
                tensor_from_array(q), tensor_from_array(k), tensor_from_array(v),
                tensor_from_array(a), b1 ? tensor_from_array(*b1) : lano::Tensor<double>(),
                b2 ? tensor_from_array(*b2) : lano::Tensor<double>(), scale));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("a"), py::arg("b1") = std::nullopt,
        py::arg("b2") = std::nullopt, py::arg("scale") = 1.0,
        "two-stage agent attention on one head with explicit agent tokens");

    m.def(
        "build_biases",
        [](const ArrayF64& u1, const ArrayF64& v1_base, const ArrayF64& u2_base,
           const ArrayF64& v2, std::size_t n_tokens) {
            lano::AgentBias<double> bias{tensor_from_array(u1), tensor_from_array(v1_base),
                                         tensor_from_array(u2_base), tensor_from_array(v2)};
            auto [b1, b2] = lano::build_biases(bias, n_tokens);
            return py::make_tuple(array_from_tensor(b1), array_from_tensor(b2));
        },
        py::arg("u1"), py::arg("v1_base"), py::arg("u2_base"), py::arg("v2"),
        py::arg("n_tokens"),
        "materialize the per-head bias matrices B1 [HxMxN] and B2 [HxNxM]");

    m.def(
        "flop_count",
        [](const std::string& variant, std::uint64_t n, std::uint64_t m_agents,
           std::uint64_t d, std::uint64_t h) {
            const auto f =
                lano::flop_count(lano::variant_from_name(variant), n, m_agents, d, h);
            return py::make_tuple(f.dominant, f.lower_order);
        },
        py::arg("variant"), py::arg("n"), py::arg("m"), py::arg("d"), py::arg("h"),
        "(dominant, lower_order) multiply-add counts for an attention core");

    m.def(
        "relative_l2",
        [](const ArrayF64& pred, const ArrayF64& truth) {
            return lano::relative_l2(tensor_from_array(pred), tensor_from_array(truth));
        },
        py::arg("pred"), py::arg("truth"), "|| pred - truth ||_2 / || truth ||_2");

    m.def(
        "gradient_loss",
        [](const ArrayF64& pred, const ArrayF64& truth, std::size_t grid_h,
           std::size_t grid_w) {
            return lano::gradient_loss(tensor_from_array(pred), tensor_from_array(truth),
                                       lano::GridShape{grid_h, grid_w});
        },
        py::arg("pred"), py::arg("truth"), py::arg("grid_h"), py::arg("grid_w"),
        "relative L2 of stacked central-difference gradients");

    m.def(
        "solve_darcy_fd",
        [](const ArrayF64& a, const ArrayF64& f) {
            return array_from_tensor(
                lano::solve_darcy_fd(tensor_from_array(a), tensor_from_array(f)));
        },
        py::arg("a"), py::arg("f"),
        "finite-volume solve of -div(a grad u) = f with zero Dirichlet data");

    m.def(
        "gen_coefficient",
        [](std::uint64_t seed, std::size_t n, double a_lo, double a_hi) {
            return array_from_tensor(lano::gen_coefficient(seed, n, a_lo, a_hi));
        },
        py::arg("seed"), py::arg("n"), py::arg("a_lo") = 3.0, py::arg("a_hi") = 12.0,
        "two-valued random permeability field");

    m.def(
        "resample_grid",
        [](const ArrayF64& field, std::size_t rows, std::size_t cols) {
            return array_from_tensor(
                lano::resample_grid(tensor_from_array(field), rows, cols));
        },
        py::arg("field"), py::arg("rows"), py::arg("cols"),
        "bilinear resampling between node-centered grids");

    m.def(
        "gradient_check_worst", [] { return lano::gradient_check_worst(nullptr); },
        "worst relative error of the finite-difference gradient suite");

    py::class_<lano::LanoModel<float>>(m, "Model", "checkpointed operator for inference")
        .def_static(
            "load",
            [](const std::string& path) { return lano::load_checkpoint<float>(path).model; },
            py::arg("path"))
        .def_property_readonly("num_parameters", &lano::LanoModel<float>::num_parameters)
        .def_property_readonly("config",
                               [](const lano::LanoModel<float>& model) {
                                   py::dict d;
                                   for (const auto& [k, v] : lano::config_to_kv(model.config))
                                       d[py::str(k)] = v;
                                   return d;
                               })
        .def(
            "forward",
            [](const lano::LanoModel<float>& model, const ArrayF32& x,
               std::optional<ArrayF32> a,
               std::optional<std::pair<std::size_t, std::size_t>> grid) {
                return array_from_tensor(
                    model.forward(tensor_from_array(x),
                                  a ? tensor_from_array(*a) : lano::Tensor<float>(),
                                  grid_from_arg(grid)));
            },
            py::arg("x"), py::arg("a") = std::nullopt, py::arg("grid") = std::nullopt,
            "predict the output field for raw coordinates/coefficients");
}
