#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "foldmap/dataset.hpp"
#include "foldmap/ensemble.hpp"
#include "foldmap/error.hpp"
#include "foldmap/eval.hpp"
#include "foldmap/matrices.hpp"
#include "foldmap/model.hpp"
#include "foldmap/structure.hpp"

namespace py = pybind11;
using namespace foldmap;

namespace {

py::array_t<double> sym_to_array(const SymMatrix& m) {
  py::array_t<double> out({m.size(), m.size()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<Atom> atoms_of(const DomainStructure& s, std::optional<std::string> sel) {
  return sel ? select_atoms(s, parse_selection(*sel)) : s.atoms;
}

std::array<std::vector<double>, kTaskCount> probs_of(const std::array<std::vector<double>, kTaskCount>& p) { return p; }

}  // namespace

PYBIND11_MODULE(_foldmap, m) {
  m.doc() = "Protein domain map stacks and CATH classifiers";

  static py::exception<Error> exc(m, "FoldmapError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = exc;
      py::object inst = err(e.what());
      inst.attr("kind") = std::string(to_string(e.kind()));
      inst.attr("exit_code") = static_cast<int>(e.error_class());
      PyErr_SetObject(err.ptr(), inst.ptr());
    }
  });

  py::class_<Atom>(m, "Atom")
      .def_readonly("serial", &Atom::serial)
      .def_readonly("name", &Atom::name)
      .def_readonly("element", &Atom::element)
      .def_readonly("residue_index", &Atom::residue_index)
      .def_readonly("residue_name", &Atom::residue_name)
      .def_property_readonly("position",
                             [](const Atom& a) { return std::array<double, 3>{a.position.x(), a.position.y(), a.position.z()}; })
      .def_readonly("charge", &Atom::charge)
      .def_readonly("radius", &Atom::radius);

  py::class_<DomainStructure>(m, "DomainStructure")
      .def_readonly("domain_id", &DomainStructure::domain_id)
      .def_readonly("atoms", &DomainStructure::atoms)
      .def_readonly("has_charges", &DomainStructure::has_charges)
      .def("select", [](const DomainStructure& s, const std::string& sel) { return select_atoms(s, parse_selection(sel)); })
      .def("__len__", [](const DomainStructure& s) { return s.atoms.size(); });

  m.def("load_structure", &load_structure, py::arg("path"));
  m.def("parse_pqr", &parse_pqr, py::arg("text"), py::arg("domain_id") = "");
  m.def("parse_pdb", &parse_pdb, py::arg("text"), py::arg("domain_id") = "");

  m.def(
      "distance_matrix",
      [](const DomainStructure& s, std::optional<std::string> sel) { return sym_to_array(distance_matrix(atoms_of(s, sel))); },
      py::arg("structure"), py::arg("selection") = py::none());
  m.def(
      "anm_cross_correlation",
      [](const DomainStructure& s, std::optional<std::string> sel, double cutoff, double gamma) {
        return sym_to_array(anm_cross_correlation(atoms_of(s, sel), AnmParams{cutoff, gamma}));
      },
      py::arg("structure"), py::arg("selection") = py::none(), py::arg("cutoff") = 15.0, py::arg("gamma") = 1.0);
  m.def(
      "nb_energy_matrix",
      [](const DomainStructure& s, std::optional<std::string> sel) { return sym_to_array(nb_energy_matrix(atoms_of(s, sel))); },
      py::arg("structure"), py::arg("selection") = py::none());
  m.def(
      "bicubic_resize",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a, std::size_t rows, std::size_t cols) {
        if (a.ndim() != 2) throw Error(ErrorKind::ShapeMismatch, "expected a 2-d array");
        Grid g(a.shape(0), a.shape(1));
        std::copy(a.data(), a.data() + a.size(), g.values.begin());
        const Grid r = bicubic_resize(g, rows, cols);
        py::array_t<double> out({r.rows, r.cols});
        std::copy(r.values.begin(), r.values.end(), out.mutable_data());
        return out;
      },
      py::arg("grid"), py::arg("rows") = kMapSide, py::arg("cols") = kMapSide);

  py::class_<MapStack>(m, "MapStack")
      .def_readonly("domain_id", &MapStack::domain_id)
      .def_readonly("nb_valid", &MapStack::nb_valid)
      .def_readonly("distance_only", &MapStack::distance_only)
      .def_readonly("source_atom_count", &MapStack::source_atom_count)
      .def_property_readonly("selection", [](const MapStack& s) { return std::string(selection_name(s.selection)); })
      .def_property_readonly("channels",
                             [](const MapStack& s) {
                               py::array_t<std::int16_t> out({kChannelCount, kMapSide, kMapSide});
                               std::copy(s.channels.begin(), s.channels.end(), out.mutable_data());
                               return out;
                             })
      .def("to_bytes",
           [](const MapStack& s) {
             const auto b = encode_stack(s);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def_static("from_bytes",
                  [](const py::bytes& b) {
                    const std::string_view v = b;
                    return decode_stack(std::span(reinterpret_cast<const std::uint8_t*>(v.data()), v.size()));
                  })
      .def(py::self == py::self);

  m.def(
      "build_map_stack",
      [](const DomainStructure& s, const std::string& sel, bool distance_only) {
        return distance_only ? distance_only_stack(s, parse_selection(sel)) : build_map_stack(s, parse_selection(sel));
      },
      py::arg("structure"), py::arg("selection") = "CA", py::arg("distance_only") = false);
  m.def("read_stack_file", &read_stack_file, py::arg("path"));
  m.def("write_stack_file", &write_stack_file, py::arg("stack"), py::arg("path"));

  m.def(
      "split_sizes",
      [](std::size_t n, double test_fraction, double validation_fraction) {
        const SplitSizes s = split_sizes(n, SplitSpec{test_fraction, validation_fraction});
        return py::make_tuple(s.train, s.validation, s.test);
      },
      py::arg("n"), py::arg("test_fraction") = 0.10, py::arg("validation_fraction") = 0.40);

  py::class_<Model>(m, "Model")
      .def_property_readonly("config_json", [](const Model& md) { return md.config().to_json(); })
      .def_property_readonly("head_sizes", [](const Model& md) { return md.config().head_sizes; })
      .def("parameter_count", &Model::parameter_count)
      .def("predict",
           [](const Model& md, const std::vector<MapStack>& stacks) {
             py::list out;
             for (const Prediction& p : md.predict(stacks)) {
               py::dict d;
               d["probabilities"] = probs_of(p.probabilities);
               d["predicted"] = std::array<std::size_t, kTaskCount>{p.predicted(Task::C), p.predicted(Task::A),
                                                                   p.predicted(Task::T), p.predicted(Task::H)};
               d["fingerprint"] = p.fingerprint;
               out.append(d);
             }
             return out;
           })
      .def("fingerprint", &Model::fingerprint)
      .def("save", [](const Model& md, const std::filesystem::path& p) { save_checkpoint(md, p); });
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "accuracy", [](const std::vector<int>& p, const std::vector<int>& t) { return accuracy(p, t); }, py::arg("predicted"),
      py::arg("truth"));
  m.def(
      "weighted_f1", [](const std::vector<int>& p, const std::vector<int>& t, std::size_t k) { return weighted_f1(p, t, k).weighted; },
      py::arg("predicted"), py::arg("truth"), py::arg("k"));
  m.def(
      "homogeneity", [](const std::vector<int>& c, const std::vector<int>& l) { return homogeneity(c, l); },
      py::arg("clusters"), py::arg("labels"));
  m.def(
      "kmeans",
      [](const Points& pts, std::size_t k, std::uint64_t seed, int n_restarts, int max_iter) {
        const KmeansResult r = kmeans(pts, k, KmeansOptions{n_restarts, max_iter, seed});
        return py::make_tuple(r.assignments, r.centroids, r.inertia);
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("n_restarts") = 10, py::arg("max_iter") = 300);
  m.def(
      "combine_probabilities",
      [](const std::vector<std::vector<double>>& probs, double w) { return combine_probabilities(probs, w); },
      py::arg("member_probs"), py::arg("weight"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
