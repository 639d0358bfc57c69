// Copyright 2026 The rrrnet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Thin bindings. Stores cross the boundary as ordered dicts of float32 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rrr/analyzer.hpp"
#include "rrr/engine.hpp"
#include "rrr/errors.hpp"
#include "rrr/surgery.hpp"
#include "rrr/tensor_store.hpp"

namespace py = pybind11;

namespace rrr {
namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

TensorF to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  const float* p = a.data();
  return TensorF(std::move(shape), std::vector<float>(p, p + a.size()));
}

Array to_array(const TensorF& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  Array a(shape);
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

TensorStore to_store(const py::dict& d) {
  TensorStore s;
  for (const auto& [k, v] : d) s.add(py::cast<std::string>(k), to_tensor(py::cast<Array>(v)));
  return s;
}

py::dict to_dict(const TensorStore& s) {
  py::dict d;
  for (const auto& [name, t] : s.entries()) d[py::str(name)] = to_array(t);
  return d;
}

ArchSpec make_spec(const std::array<int, kNumPhases>& blocks, int num_classes, int input_side, int num_branches,
                   std::optional<int> budget_offset, int split_phase) {
  ArchSpec spec = make_arch(blocks[0], blocks[1], blocks[2], blocks[3], num_classes, std::nullopt, input_side);
  if (num_branches != 1 || budget_offset) {
    const int a = budget_offset ? *budget_offset : solve_budget_offset(spec, num_branches, split_phase);
    spec.branch_plan = BranchPlan{num_branches, a, split_phase};
    spec.validate();
  }
  return spec;
}

}  // namespace
}  // namespace rrr

PYBIND11_MODULE(_rrrnet, m) {
  using namespace rrr;
  m.doc() = "Accounting, surgery and inference for reduced and branched ResNet152 variants.";

  auto base = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<ArchSpec>(m, "ArchSpec")
      .def(py::init(&make_spec), py::arg("blocks") = std::array<int, 4>{1, 1, 1, 1}, py::arg("num_classes") = 20,
           py::arg("input_side") = 128, py::arg("num_branches") = 1, py::arg("budget_offset") = py::none(),
           py::arg("split_phase") = 4, "budget_offset=None solves the smallest offset within budget")
      .def_readonly("blocks", &ArchSpec::blocks_per_phase)
      .def_readonly("num_classes", &ArchSpec::num_classes)
      .def_readonly("input_side", &ArchSpec::input_side)
      .def_property_readonly("num_branches", &ArchSpec::num_branches)
      .def_property_readonly("budget_offset",
                             [](const ArchSpec& s) { return s.branch_plan ? s.branch_plan->budget_offset : 0; })
      .def_property_readonly("split_phase",
                             [](const ArchSpec& s) { return s.branch_plan ? s.branch_plan->split_phase : 4; })
      .def("mid_width", &ArchSpec::mid_width, py::arg("phase"))
      .def("unbranched", &ArchSpec::unbranched)
      .def_property_readonly("name", &ArchSpec::name)
      .def("to_text", [](const ArchSpec& s) { return to_text(s); })
      .def_static("from_text", &from_text)
      .def("__eq__", [](const ArchSpec& a, const ArchSpec& b) { return a == b; })
      .def("__repr__", [](const ArchSpec& s) { return "<ArchSpec " + s.name() + ">"; });

  m.def("template_arch", &template_arch, py::arg("num_classes") = 20, py::arg("input_side") = 128);
  m.def("minimal_arch", &minimal_arch, py::arg("num_classes") = 20, py::arg("input_side") = 128);
  m.def("compute_branch_width", &compute_branch_width, py::arg("template_width"), py::arg("num_branches"),
        py::arg("budget_offset"));
  m.def("solve_budget_offset", &solve_budget_offset, py::arg("spec"), py::arg("num_branches"),
        py::arg("split_phase") = 4);
  m.def("total_params", &total_params);
  m.def("total_flops", &total_flops);
  m.def("cost_report_csv", [](const ArchSpec& s) { return cost_report_csv(s, analyze(s)); });

  m.def("load_store", [](const std::string& path) { return to_dict(load(path)); });
  m.def("save_store", [](const py::dict& d, const std::string& path) { save(to_store(d), path); });
  m.def(
      "init_store",
      [](const ArchSpec& s, std::uint64_t seed, int divisor) {
        return to_dict(init_store(s, seed, WidthConfig::scaled_down(divisor)));
      },
      py::arg("spec"), py::arg("seed") = 0, py::arg("width_divisor") = 1);
  m.def(
      "extract_reduced",
      [](const py::dict& d, const ArchSpec& s, std::uint64_t seed) { return to_dict(extract_reduced(to_store(d), s, seed)); },
      py::arg("store"), py::arg("spec"), py::arg("head_seed") = 0);
  m.def(
      "split_kernels",
      [](const py::dict& d, const ArchSpec& s, std::uint64_t seed) { return to_dict(split_kernels(to_store(d), s, seed)); },
      py::arg("store"), py::arg("spec"), py::arg("seed") = 0);

  m.def(
      "forward",
      [](const ArchSpec& s, const py::dict& d, const Array& image) {
        const auto p = forward(s, to_store(d), to_tensor(image));
        py::array_t<float> per_branch({p.per_branch_probs.size(), p.probs.size()});
        auto w = per_branch.mutable_unchecked<2>();
        for (std::size_t b = 0; b < p.per_branch_probs.size(); ++b) {
          for (std::size_t c = 0; c < p.probs.size(); ++c) w(b, c) = p.per_branch_probs[b][c];
        }
        return py::make_tuple(to_array(TensorF({static_cast<int>(p.probs.size())}, p.probs)), per_branch);
      },
      py::arg("spec"), py::arg("store"), py::arg("image"),
      "Returns (probs, per_branch_probs) for a 3 x S x S image.");
}
