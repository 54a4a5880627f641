#include <memory>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "agenda/classifier.hpp"
#include "agenda/dataset.hpp"
#include "agenda/metrics.hpp"
#include "agenda/mf.hpp"
#include "agenda/model.hpp"
#include "agenda/selection.hpp"
#include "agenda/synthetic.hpp"

namespace py = pybind11;
using namespace agenda;

namespace {

std::vector<int> type_signs(const std::vector<UserType>& types) {
  std::vector<int> out;
  out.reserve(types.size());
  for (const auto t : types) out.push_back(sign(t));
  return out;
}

std::vector<UserType> types_from_signs(const std::vector<int>& s) {
  std::vector<UserType> out;
  out.reserve(s.size());
  for (const int v : s) {
    if (v != 1 && v != -1) throw py::value_error("labels must be +1 or -1");
    out.push_back(v == 1 ? UserType::plus : UserType::minus);
  }
  return out;
}

/// Owns a model copy so the session outlives the Python model object safely.
struct PySession {
  std::shared_ptr<const ItemModel> model;
  SessionState state;

  PySession(const ItemModel& m, std::vector<ItemId> candidates, UpdateMode mode)
      : model(std::make_shared<ItemModel>(m)), state(*model, std::move(candidates), mode) {}
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Active inference of a private binary user attribute from solicited ratings";

  py::register_exception<Error>(m, "AgendaError", PyExc_ValueError);

  py::enum_<Attribute>(m, "Attribute").value("gender", Attribute::gender).value("age", Attribute::age);
  py::enum_<UpdateMode>(m, "UpdateMode")
      .value("direct", UpdateMode::direct)
      .value("incremental", UpdateMode::incremental);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("n_users", &Dataset::n_users)
      .def_readonly("n_items", &Dataset::n_items)
      .def_readonly("user_labels", &Dataset::user_labels)
      .def_readonly("item_labels", &Dataset::item_labels)
      .def_property_readonly("types", [](const Dataset& d) { return type_signs(d.types); })
      .def_property_readonly("ratings",
                             [](const Dataset& d) {
                               std::vector<std::tuple<int, int, double>> out;
                               for (const auto& r : d.ratings) out.emplace_back(r.user, r.item, r.rating);
                               return out;
                             })
      .def_property_readonly("label_names",
                             [](const Dataset& d) { return std::make_pair(d.label_names.plus, d.label_names.minus); })
      .def("__len__", [](const Dataset& d) { return d.ratings.size(); })
      .def("filter", &filter_dataset, py::arg("min_user_ratings"), py::arg("min_item_ratings"))
      .def("write_csv", &write_csv, py::arg("path"));

  m.def("parse_movielens", &parse_movielens, py::arg("ratings_path"), py::arg("users_path"),
        py::arg("attribute") = Attribute::gender);
  m.def(
      "parse_csv",
      [](const std::filesystem::path& path, const std::string& user_col, const std::string& item_col,
         const std::string& rating_col, const std::string& type_col, const std::string& plus_class,
         const std::string& minus_class, std::optional<std::filesystem::path> types_path) {
        CsvSchema s{user_col, item_col, rating_col, type_col, plus_class, minus_class, std::move(types_path)};
        return parse_csv(path, s);
      },
      py::arg("path"), py::arg("user_col") = "user", py::arg("item_col") = "item", py::arg("rating_col") = "rating",
      py::arg("type_col") = "type", py::arg("plus_class") = "+1", py::arg("minus_class") = "-1",
      py::arg("types_path") = py::none());

  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init<>())
      .def_readwrite("d", &HyperParams::d)
      .def_readwrite("reg", &HyperParams::reg)
      .def_readwrite("epochs", &HyperParams::epochs)
      .def_readwrite("step_size", &HyperParams::step_size)
      .def_readwrite("classifier_lambda", &HyperParams::classifier_lambda)
      .def_readwrite("sigma_0", &HyperParams::sigma_0)
      .def_readwrite("prior_plus", &HyperParams::prior_plus)
      .def_readwrite("seed", &HyperParams::seed);

  py::class_<ItemModel>(m, "ItemModel")
      .def_readonly("V", &ItemModel::V)
      .def_readonly("Z", &ItemModel::Z)
      .def_readwrite("hp", &ItemModel::hp)
      .def_property_readonly("n_items", &ItemModel::n_items)
      .def_property_readonly("dim", &ItemModel::dim);
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  m.def(
      "train_mf",
      [](const Dataset& d, const HyperParams& hp) {
        py::gil_scoped_release release;
        return train_mf(d, hp).model;
      },
      py::arg("dataset"), py::arg("hp") = HyperParams{});

  py::class_<TypePosterior>(m, "Posterior")
      .def_readonly("plus", &TypePosterior::plus)
      .def_readonly("minus", &TypePosterior::minus)
      .def("__repr__", [](const TypePosterior& p) {
        return "Posterior(plus=" + std::to_string(p.plus) + ", minus=" + std::to_string(p.minus) + ")";
      });
  m.def(
      "posterior",
      [](const ItemModel& model, std::vector<ItemId> items, std::vector<double> ratings) {
        return posterior(model, Query(std::move(items), std::move(ratings)));
      },
      py::arg("model"), py::arg("items"), py::arg("ratings"));
  m.def(
      "classify",
      [](const ItemModel& model, std::vector<ItemId> items, std::vector<double> ratings) {
        return sign(classify(model, Query(std::move(items), std::move(ratings))));
      },
      py::arg("model"), py::arg("items"), py::arg("ratings"));

  py::class_<PySession>(m, "Session")
      .def(py::init<const ItemModel&, std::vector<ItemId>, UpdateMode>(), py::arg("model"), py::arg("candidates"),
           py::arg("mode") = UpdateMode::incremental)
      .def("select_next", [](const PySession& s) { return select_next_fbc(s.state); })
      .def("extend", [](PySession& s, ItemId j, double r) { s.state.extend(j, r); }, py::arg("item"),
           py::arg("rating"))
      .def("posterior", [](const PySession& s) { return posterior(*s.model, s.state.query()); })
      .def("risk", [](const PySession& s, ItemId j) { return std::exp(risk_closed_form(s.state, j).log_value); },
           py::arg("item"))
      .def_property_readonly("asked", [](const PySession& s) { return s.state.asked(); })
      .def_property_readonly("candidates", [](const PySession& s) { return s.state.candidates(); });

  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        const auto t = types_from_signs(labels);
        return auc(scores, t);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "generate_synthetic",
      [](int n_users, int n_items, int d, double sigma_0, double bias_scale, double density, std::uint64_t seed) {
        SyntheticConfig c;
        c.n_users = n_users;
        c.n_items = n_items;
        c.d = d;
        c.sigma_0 = sigma_0;
        c.bias_scale = bias_scale;
        c.density = density;
        c.seed = seed;
        auto g = generate_synthetic(c);
        return std::make_pair(std::move(g.dataset), std::move(g.truth));
      },
      py::arg("n_users") = 100, py::arg("n_items") = 50, py::arg("d") = 5, py::arg("sigma_0") = 1.0,
      py::arg("bias_scale") = 1.0, py::arg("density") = 1.0, py::arg("seed") = 1);
}
