#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "agenda/model.hpp"

namespace agenda {

void HyperParams::validate() const {
  if (d < 1) throw Error("hyperparameters: d must be >= 1");
  if (reg < 0) throw Error("hyperparameters: reg must be >= 0");
  if (epochs < 0) throw Error("hyperparameters: epochs must be >= 0");
  if (!(step_size > 0)) throw Error("hyperparameters: step_size must be > 0");
  if (!(classifier_lambda > 0)) throw Error("hyperparameters: classifier_lambda must be > 0");
  if (!(sigma_0 > 0)) throw Error("hyperparameters: sigma_0 must be > 0");
  if (!(prior_plus > 0 && prior_plus < 1)) throw Error("hyperparameters: prior_plus must be in (0,1)");
}

void ItemModel::validate() const {
  hp.validate();
  if (V.cols() != hp.d) throw Error("model: profile width differs from d");
  if (Z.rows() != V.rows() || Z.cols() != 2) throw Error("model: bias matrix has wrong shape");
  if (!V.allFinite() || !Z.allFinite()) throw Error("model: non-finite entries");
}

double predict_rating(const ItemModel& model, const Eigen::Ref<const Eigen::VectorXd>& u, ItemId j,
                      UserType t) {
  return u.dot(model.V.row(j).transpose()) + model.bias(j, t);
}

namespace {
constexpr const char* kMagic = "AGENDA-MODEL v1";
}

void save_model(const ItemModel& model, const std::filesystem::path& path) {
  model.validate();
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << kMagic << '\n';
  out << fmt::format("d={} lambda={:.17g} sigma0={:.17g} prior_plus={:.17g} n_items={}\n", model.dim(),
                     model.hp.classifier_lambda, model.hp.sigma_0, model.hp.prior_plus,
                     model.n_items());
  for (int j = 0; j < model.n_items(); ++j) {
    out << fmt::format("{}\t{:.17g}\t{:.17g}", j, model.Z(j, 0), model.Z(j, 1));
    for (int c = 0; c < model.dim(); ++c) out << fmt::format("\t{:.17g}", model.V(j, c));
    out << '\n';
  }
  if (!out) throw Error(fmt::format("error writing '{}'", path.string()));
}

ItemModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw Error(fmt::format("{}: not an AGENDA-MODEL v1 file", path.string()));
  }
  if (!std::getline(in, line)) throw Error(fmt::format("{}: truncated header", path.string()));

  ItemModel m;
  long long n_items = -1;
  int d = -1;
  {
    std::istringstream hs(line);
    std::string kv;
    int seen = 0;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(fmt::format("{}: malformed header", path.string()));
      const auto key = kv.substr(0, eq);
      const auto val = kv.substr(eq + 1);
      try {
        if (key == "d") d = std::stoi(val);
        else if (key == "lambda") m.hp.classifier_lambda = std::stod(val);
        else if (key == "sigma0") m.hp.sigma_0 = std::stod(val);
        else if (key == "prior_plus") m.hp.prior_plus = std::stod(val);
        else if (key == "n_items") n_items = std::stoll(val);
        else throw Error(fmt::format("{}: unknown header key '{}'", path.string(), key));
      } catch (const std::logic_error&) {
        throw Error(fmt::format("{}: bad header value for '{}'", path.string(), key));
      }
      ++seen;
    }
    if (seen != 5 || d < 1 || n_items < 0) throw Error(fmt::format("{}: incomplete header", path.string()));
  }
  m.hp.d = d;
  m.V.resize(n_items, d);
  m.Z.resize(n_items, 2);

  for (long long j = 0; j < n_items; ++j) {
    if (!std::getline(in, line)) {
      throw Error(fmt::format("{}: truncated, expected {} item rows, got {}", path.string(), n_items, j));
    }
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string f;
    while (std::getline(ls, f, '\t')) fields.push_back(f);
    if (static_cast<int>(fields.size()) != 3 + d) {
      throw Error(fmt::format("{}: item row {} has {} profile entries, header says d={}", path.string(),
                              j, static_cast<int>(fields.size()) - 3, d));
    }
    try {
      if (std::stoll(fields[0]) != j) throw Error(fmt::format("{}: item rows out of order", path.string()));
      m.Z(j, 0) = std::stod(fields[1]);
      m.Z(j, 1) = std::stod(fields[2]);
      for (int c = 0; c < d; ++c) m.V(j, c) = std::stod(fields[3 + c]);
    } catch (const std::logic_error&) {
      throw Error(fmt::format("{}: unparsable value in item row {}", path.string(), j));
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty()) throw Error(fmt::format("{}: trailing data after item rows", path.string()));
  }
  m.validate();
  return m;
}

}  // namespace agenda
