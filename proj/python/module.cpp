#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "deepmorph/checkpoint.hpp"
#include "deepmorph/cli.hpp"
#include "deepmorph/errors.hpp"
#include "deepmorph/geometry.hpp"
#include "deepmorph/losses.hpp"
#include "deepmorph/morph.hpp"
#include "deepmorph/synth.hpp"
#include "deepmorph/trainer.hpp"

namespace py = pybind11;
using namespace deepmorph;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (C, H, W) arrays; 2-D input is read as a single channel.
FeatureMap to_map(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected a 2-D or 3-D array");
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(0)) : 1;
  const int h = static_cast<int>(a.shape(a.ndim() - 2));
  const int w = static_cast<int>(a.shape(a.ndim() - 1));
  return FeatureMap(c, w, h, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const FeatureMap& m) {
  Array out({m.channels(), m.height(), m.width()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

BinaryMap to_mask(const Array& a) {
  const FeatureMap m = to_map(a);
  if (m.channels() != 1) throw ShapeError("mask must have one channel");
  BinaryMap b(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) b.set(x, y, m.at(0, y, x) > 0.5);
  }
  return b;
}

// SE weights arrive as (C, N, M): rows along y, as stored.
StructElem make_se(const Array& weights, bool reflected) {
  FeatureMap w = to_map(weights);
  StructElem se = reflected ? StructElem::reflected(w.channels(), w.width(), w.height())
                            : StructElem(w.channels(), w.width(), w.height());
  se.set_weights(std::move(w));
  return se;
}

using PolygonList = std::vector<std::pair<double, double>>;

TextPolygon to_polygon(const PolygonList& pts) {
  TextPolygon p;
  for (const auto& [x, y] : pts) p.vertices.push_back({x, y});
  return p;
}

PolygonList from_polygon(const TextPolygon& p) {
  PolygonList out;
  for (const auto& v : p.vertices) out.emplace_back(v.x, v.y);
  return out;
}

using SegmentTuple = std::tuple<double, double, double, double, double, double>;

TextSegment to_segment(const SegmentTuple& t) {
  const auto [x, y, h, w, theta, score] = t;
  return TextSegment{x, y, h, w, theta, score};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Trainable morphology blocks for segment-based text detection";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      error(e.what());
    }
  });

  m.def("dilate", [](const Array& x, const Array& se, bool reflected) {
    return to_array(dilate(to_map(x), make_se(se, reflected)));
  }, py::arg("x"), py::arg("se"), py::arg("reflected") = false);
  m.def("erode", [](const Array& x, const Array& se, bool reflected) {
    return to_array(erode(to_map(x), make_se(se, reflected)));
  }, py::arg("x"), py::arg("se"), py::arg("reflected") = false);

  py::class_<MorphBlock>(m, "MorphBlock")
      .def_static("dmop", &MorphBlock::dmop, py::arg("channels"), py::arg("se_size") = 2,
                  py::arg("depth") = 2)
      .def_static("dmcl", &MorphBlock::dmcl, py::arg("channels"), py::arg("se_size") = 3,
                  py::arg("depth") = 4)
      .def_static("flat_opening", &MorphBlock::flat_opening, py::arg("channels"),
                  py::arg("se_size") = 2, py::arg("depth") = 1)
      .def_static("flat_closing", &MorphBlock::flat_closing, py::arg("channels"),
                  py::arg("se_size") = 3, py::arg("depth") = 1)
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); })
      .def("save", [](const MorphBlock& b, const std::filesystem::path& p) { save_checkpoint(b, p); })
      .def_property_readonly("name", &MorphBlock::name)
      .def_property_readonly("residual", &MorphBlock::residual)
      .def_property_readonly("channels", &MorphBlock::channels)
      .def("__len__", [](const MorphBlock& b) { return b.layers().size(); })
      .def("kinds", [](const MorphBlock& b) {
        std::vector<std::string> out;
        for (const auto& l : b.layers()) out.emplace_back(to_string(l.kind()));
        return out;
      })
      .def("weights", [](const MorphBlock& b, std::size_t k) {
        return to_array(b.layers().at(k).se().weights());
      })
      .def("gradient", [](const MorphBlock& b, std::size_t k) {
        return to_array(b.layers().at(k).se().gradient());
      })
      .def("set_weights", [](MorphBlock& b, std::size_t k, const Array& w) {
        b.layers().at(k).se().set_weights(to_map(w));
      })
      .def("randomize", &randomize_weights, py::arg("seed"))
      .def("zero_grad", &MorphBlock::zero_grad)
      .def("forward", [](MorphBlock& b, const Array& x) { return to_array(b.forward(to_map(x))); })
      .def("backward", [](MorphBlock& b, const Array& g) { return to_array(b.backward(to_map(g))); })
      .def("grad_check", [](MorphBlock& b, const Array& x, const Array& w, bool corrupt) {
        b.set_gradient_fault(corrupt);
        const auto rep = grad_check(b, to_map(x), weighted_square_loss(to_map(w)));
        b.set_gradient_fault(false);
        return py::dict(py::arg("passed") = rep.passed,
                        py::arg("max_se_deviation") = rep.max_se_deviation,
                        py::arg("max_input_deviation") = rep.max_input_deviation,
                        py::arg("checked") = rep.checked, py::arg("skipped") = rep.skipped);
      }, py::arg("x"), py::arg("weights"), py::arg("corrupt_backward") = false);

  m.def("jittered_map", [](std::uint64_t seed, int c, int w, int h) {
    return to_array(jittered_map(seed, c, w, h));
  }, py::arg("seed"), py::arg("channels"), py::arg("width"), py::arg("height"));

  m.def("balanced_ce_ohem", [](const Array& pred, const Array& target, bool probabilities) {
    const auto v = balanced_ce_ohem(to_map(pred), to_mask(target),
                                    probabilities ? ScoreKind::probabilities : ScoreKind::logits);
    return py::make_tuple(v.value, to_array(v.grad));
  }, py::arg("pred"), py::arg("target"), py::arg("probabilities") = false);
  m.def("balanced_ce_tc", [](const Array& pred, const Array& target, bool probabilities) {
    const auto v = balanced_ce_tc(to_map(pred), to_mask(target),
                                  probabilities ? ScoreKind::probabilities : ScoreKind::logits);
    return py::make_tuple(v.value, to_array(v.grad));
  }, py::arg("pred"), py::arg("target"), py::arg("probabilities") = false);
  m.def("smooth_l1", [](const Array& pred, const Array& target, const Array& mask) {
    const auto v = smooth_l1(to_map(pred), to_map(target), to_mask(mask));
    return py::make_tuple(v.value, to_array(v.grad));
  });

  m.def("tw_from_th", &tw_from_th);
  m.def("shrink_polygon", [](const PolygonList& p, double ratio) {
    return from_polygon(shrink_polygon(to_polygon(p), ratio));
  }, py::arg("polygon"), py::arg("ratio") = 0.2);
  m.def("rotated_iou", [](const SegmentTuple& a, const SegmentTuple& b) {
    return rotated_iou(to_segment(a), to_segment(b));
  });
  m.def("nms", [](const std::vector<SegmentTuple>& segs, double iou) {
    std::vector<TextSegment> in;
    for (const auto& s : segs) in.push_back(to_segment(s));
    std::vector<SegmentTuple> out;
    for (const auto& s : nms_segments(in, iou)) out.emplace_back(s.x, s.y, s.h, s.w, s.theta, s.score);
    return out;
  }, py::arg("segments"), py::arg("iou_threshold") = 0.5);
  m.def("polygon_iou", [](const PolygonList& a, const PolygonList& b) {
    return polygon_iou(to_polygon(a), to_polygon(b));
  });

  m.def("generate", [](std::uint64_t seed) -> py::object {
    SynthConfig c;
    c.seed = seed;
    const auto s = generate(c);
    if (!s) return py::none();
    std::vector<PolygonList> truths;
    for (const auto& t : s->truths) truths.push_back(from_polygon(t));
    return py::dict(py::arg("corrupted") = to_array(s->corrupted),
                    py::arg("clean") = to_array(s->clean), py::arg("truths") = truths,
                    py::arg("gap_pixels") = s->gap_pixels,
                    py::arg("noise_pixels") = s->noise_pixels);
  }, py::arg("seed"));

  m.def("load_map", [](const std::filesystem::path& p) { return to_array(load_map(p)); });
  m.def("save_map", [](const Array& a, const std::filesystem::path& p) { save_map(to_map(a), p); });

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "deepmorph");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));
}
