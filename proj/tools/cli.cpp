#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "agenda/dataset.hpp"
#include "agenda/eval.hpp"
#include "agenda/mf.hpp"
#include "agenda/model.hpp"
#include "properties.hpp"

namespace agenda::cli {
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string out = "out";
  // data
  std::string data;
  std::string format = "movielens";
  std::string ratings;
  std::string users;
  std::string attribute = "gender";
  std::string user_col = "user";
  std::string item_col = "item";
  std::string rating_col = "rating";
  std::string type_col = "type";
  std::string plus_class = "+1";
  std::string minus_class = "-1";
  std::string types_file;
  int min_user_ratings = 0;
  int min_item_ratings = 0;
  // model
  int d = 20;
  double reg = 0.1;
  int epochs = 20;
  double step_size = 0.005;
  double lambda = 100.0;
  double sigma0 = 1.0;
  double prior_plus = 0.5;
  std::vector<std::uint64_t> seed{1};
  std::string model;
  // cv
  std::vector<int> grid_d;
  std::vector<double> grid_reg;
  std::vector<double> grid_lambda;
  int cv_folds = 10;
  std::string cv_objective = "auc";
  // simulate
  std::vector<std::string> strategies{"incfbc", "maxgap", "entropy", "random"};
  int budget = 100;
  double tau = 0.99;
  int holdout = 10;
  int rmse_stride = 10;
  int folds = 10;
  int jobs = 1;
  int max_users = 0;
  bool pointest_literal_stop = false;
  double logistic_l2 = 1e-3;
  bool full_history = false;
  // bench
  int bench_d = 20;
  int bench_candidates = 200;
  std::vector<int> bench_sizes{1, 5, 10, 20, 40, 60, 80, 100};
  int bench_reps = 30;
  int bench_warmup = 3;
  // selftest
  int selftest_sessions = 200;
  int selftest_instances = 100;
};

void add_options(CLI::App& app, Options& o) {
  app.add_option("--out", o.out, "output directory")->capture_default_str();
  app.add_option("--data", o.data, "dataset snapshot CSV (as written by ingest)");
  app.add_option("--format", o.format, "raw input format")->check(CLI::IsMember({"movielens", "csv"}))->capture_default_str();
  app.add_option("--ratings", o.ratings, "raw ratings file");
  app.add_option("--users", o.users, "MovieLens users file");
  app.add_option("--attribute", o.attribute, "MovieLens attribute")->check(CLI::IsMember({"gender", "age"}))->capture_default_str();
  app.add_option("--user_col", o.user_col)->capture_default_str();
  app.add_option("--item_col", o.item_col)->capture_default_str();
  app.add_option("--rating_col", o.rating_col)->capture_default_str();
  app.add_option("--type_col", o.type_col)->capture_default_str();
  app.add_option("--plus_class", o.plus_class, "type label mapped to +1")->capture_default_str();
  app.add_option("--minus_class", o.minus_class, "type label mapped to -1 (empty: infer)")->capture_default_str();
  app.add_option("--types_file", o.types_file, "CSV with user and type columns");
  app.add_option("--min_user_ratings", o.min_user_ratings)->capture_default_str();
  app.add_option("--min_item_ratings", o.min_item_ratings)->capture_default_str();

  app.add_option("--d", o.d, "latent dimension")->capture_default_str();
  app.add_option("--reg", o.reg, "MF profile regularizer")->capture_default_str();
  app.add_option("--epochs", o.epochs)->capture_default_str();
  app.add_option("--step_size", o.step_size)->capture_default_str();
  app.add_option("--lambda", o.lambda, "classifier lambda")->capture_default_str();
  app.add_option("--sigma0", o.sigma0)->capture_default_str();
  app.add_option("--prior_plus", o.prior_plus)->capture_default_str();
  app.add_option("--seed", o.seed, "seed, or comma-separated seeds for simulate")->delimiter(',')->capture_default_str();
  app.add_option("--model", o.model, "model file for simulate (skips cross-validation)");

  app.add_option("--grid_d", o.grid_d)->delimiter(',');
  app.add_option("--grid_reg", o.grid_reg)->delimiter(',');
  app.add_option("--grid_lambda", o.grid_lambda)->delimiter(',');
  app.add_option("--cv_folds", o.cv_folds)->capture_default_str();
  app.add_option("--cv_objective", o.cv_objective)->check(CLI::IsMember({"auc", "rmse"}))->capture_default_str();

  app.add_option("--strategies", o.strategies)->delimiter(',')->capture_default_str();
  app.add_option("--budget", o.budget, "maximum questions per user")->capture_default_str();
  app.add_option("--tau", o.tau, "confidence threshold")->capture_default_str();
  app.add_option("--holdout", o.holdout)->capture_default_str();
  app.add_option("--rmse_stride", o.rmse_stride)->capture_default_str();
  app.add_option("--folds", o.folds)->capture_default_str();
  app.add_option("--jobs", o.jobs, "worker threads")->capture_default_str();
  app.add_option("--max_users", o.max_users, "test users per fold (0 = all)")->capture_default_str();
  app.add_option("--pointest_literal_stop", o.pointest_literal_stop)->capture_default_str();
  app.add_option("--logistic_l2", o.logistic_l2)->capture_default_str();
  app.add_option("--full_history", o.full_history, "also report full-history AUCs per fold")->capture_default_str();

  app.add_option("--bench_d", o.bench_d)->capture_default_str();
  app.add_option("--bench_candidates", o.bench_candidates)->capture_default_str();
  app.add_option("--bench_sizes", o.bench_sizes)->delimiter(',')->capture_default_str();
  app.add_option("--bench_reps", o.bench_reps)->capture_default_str();
  app.add_option("--bench_warmup", o.bench_warmup)->capture_default_str();

  app.add_option("--selftest_sessions", o.selftest_sessions)->capture_default_str();
  app.add_option("--selftest_instances", o.selftest_instances)->capture_default_str();
}

HyperParams hyperparams(const Options& o, std::uint64_t seed) {
  HyperParams hp;
  hp.d = o.d;
  hp.reg = o.reg;
  hp.epochs = o.epochs;
  hp.step_size = o.step_size;
  hp.classifier_lambda = o.lambda;
  hp.sigma_0 = o.sigma0;
  hp.prior_plus = o.prior_plus;
  hp.seed = seed;
  hp.validate();
  return hp;
}

/// Tracks files read and written for the manifest.
struct Manifest {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

Dataset load_data(const Options& o, Manifest& man) {
  Dataset d;
  CsvSchema schema;
  schema.user_col = o.user_col;
  schema.item_col = o.item_col;
  schema.rating_col = o.rating_col;
  schema.type_col = o.type_col;
  schema.plus_class = o.plus_class;
  schema.minus_class = o.minus_class;
  if (!o.types_file.empty()) {
    schema.types_path = o.types_file;
    man.inputs.push_back(o.types_file);
  }
  if (!o.data.empty()) {
    man.inputs.push_back(o.data);
    d = parse_csv(o.data, schema);
  } else if (o.format == "movielens") {
    if (o.ratings.empty() || o.users.empty()) throw UsageError("movielens input needs --ratings and --users");
    man.inputs.push_back(o.ratings);
    man.inputs.push_back(o.users);
    d = parse_movielens(o.ratings, o.users, parse_attribute(o.attribute));
  } else {
    if (o.ratings.empty()) throw UsageError("csv input needs --ratings");
    man.inputs.push_back(o.ratings);
    d = parse_csv(o.ratings, schema);
  }
  if (o.min_user_ratings > 0 || o.min_item_ratings > 0) d = filter_dataset(d, o.min_user_ratings, o.min_item_ratings);
  return d;
}

std::vector<Strategy> strategies(const Options& o) {
  std::vector<Strategy> out;
  for (const auto& s : o.strategies) out.push_back(parse_strategy(s));
  return out;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::string& config,
                    const Options& o, const Manifest& man) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config"] = config;
  j["seeds"] = o.seed;
  auto files = [](const std::vector<std::string>& paths) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& p : paths) arr.push_back({{"path", p}, {"sha256", sha256_file(p)}});
    return arr;
  };
  j["inputs"] = files(man.inputs);
  j["outputs"] = files(man.outputs);
  std::ofstream(dir / "manifest.json") << j.dump(2) << '\n';
}

int cmd_ingest(const Options& o, Manifest& man, std::ostream& out) {
  const auto d = load_data(o, man);
  const auto path = (fs::path(o.out) / "dataset.csv").string();
  write_csv(d, path);
  man.outputs.push_back(path);
  const auto n_plus = std::count(d.types.begin(), d.types.end(), UserType::plus);
  out << fmt::format("users {} items {} ratings {} ({} {} / {} {})\n", d.n_users, d.n_items, d.ratings.size(),
                     n_plus, d.label_names.plus, d.n_users - n_plus, d.label_names.minus);
  out << fmt::format("read it back with --data {} --plus_class {} --minus_class {}\n", path, d.label_names.plus,
                     d.label_names.minus);
  return 0;
}

int cmd_train(const Options& o, Manifest& man, std::ostream& out) {
  const auto d = load_data(o, man);
  const auto res = train_mf(d, hyperparams(o, o.seed.front()));
  const auto model_path = (fs::path(o.out) / "model.txt").string();
  save_model(res.model, model_path);
  const auto trace_path = (fs::path(o.out) / "train_trace.csv").string();
  {
    std::ofstream t(trace_path);
    t << "epoch,objective\n";
    for (std::size_t e = 0; e < res.trace.objective.size(); ++e) {
      t << e + 1 << ',' << fmt::format("{:.10g}", res.trace.objective[e]) << '\n';
    }
  }
  man.outputs.push_back(model_path);
  man.outputs.push_back(trace_path);
  out << fmt::format("trained d={} on {} users, {} items; final objective {:.6g}\n", o.d, d.n_users, d.n_items,
                     res.trace.objective.empty() ? 0.0 : res.trace.objective.back());
  return 0;
}

int cmd_cv(const Options& o, Manifest& man, std::ostream& out) {
  const auto data = load_data(o, man);
  const auto base = hyperparams(o, o.seed.front());
  const auto ds = o.grid_d.empty() ? std::vector<int>{o.d} : o.grid_d;
  const auto regs = o.grid_reg.empty() ? std::vector<double>{o.reg} : o.grid_reg;
  const auto lambdas = o.grid_lambda.empty() ? std::vector<double>{o.lambda} : o.grid_lambda;
  std::vector<HyperParams> grid;
  for (const int d : ds) {
    for (const double r : regs) {
      for (const double l : lambdas) {
        HyperParams hp = base;
        hp.d = d;
        hp.reg = r;
        hp.classifier_lambda = l;
        hp.validate();
        grid.push_back(hp);
      }
    }
  }
  const auto objective = o.cv_objective == "auc" ? CvObjective::auc : CvObjective::rmse;
  const auto scores = cross_validate_scores(data, grid, o.cv_folds, objective, o.seed.front());
  std::size_t best = 0;
  for (std::size_t g = 1; g < scores.size(); ++g) {
    if (objective == CvObjective::auc ? scores[g] > scores[best] : scores[g] < scores[best]) best = g;
  }
  const auto scores_path = (fs::path(o.out) / "cv_scores.csv").string();
  const auto best_path = (fs::path(o.out) / "cv_best.csv").string();
  const std::string header = fmt::format("d,reg,lambda,epochs,step_size,{}\n", o.cv_objective);
  auto row = [&](std::size_t g) {
    return fmt::format("{},{},{},{},{},{:.10g}\n", grid[g].d, grid[g].reg, grid[g].classifier_lambda,
                       grid[g].epochs, grid[g].step_size, scores[g]);
  };
  {
    std::ofstream s(scores_path);
    s << header;
    for (std::size_t g = 0; g < grid.size(); ++g) s << row(g);
    std::ofstream b(best_path);
    b << header << row(best);
  }
  man.outputs.push_back(scores_path);
  man.outputs.push_back(best_path);
  out << fmt::format("best: d={} reg={} lambda={} ({} {:.4f})\n", grid[best].d, grid[best].reg,
                     grid[best].classifier_lambda, o.cv_objective, scores[best]);
  return 0;
}

int cmd_simulate(const Options& o, Manifest& man, std::ostream& out) {
  const auto data = load_data(o, man);
  std::optional<ItemModel> model;
  if (!o.model.empty()) {
    model = load_model(o.model);
    man.inputs.push_back(o.model);
    if (model->n_items() != data.n_items) throw Error("model/dataset mismatch");
  }
  for (const auto seed : o.seed) {
    ExperimentConfig cfg;
    cfg.hp = hyperparams(o, seed);
    cfg.strategies = strategies(o);
    cfg.session.budget = o.budget;
    cfg.session.tau = o.tau;
    cfg.session.pointest_literal_stop = o.pointest_literal_stop;
    cfg.holdout = o.holdout;
    cfg.rmse_stride = o.rmse_stride;
    cfg.folds = o.folds;
    cfg.seed = seed;
    cfg.jobs = o.jobs;
    cfg.logistic.l2 = o.logistic_l2;
    cfg.max_test_users_per_fold = o.max_users;

    EvalReport report;
    if (model) {
      for (const auto s : cfg.strategies) {
        if (s == Strategy::entropy || s == Strategy::pointest_logistic) {
          throw Error(fmt::format("strategy {} needs training ratings; omit --model to cross-validate",
                                  strategy_name(s)));
        }
      }
      report = evaluate_model(data, *model, nullptr, cfg);
    } else {
      report = run_experiment(data, cfg);
    }
    const auto path = (fs::path(o.out) / fmt::format("report_seed{}.csv", seed)).string();
    write_report_csv(report, path);
    man.outputs.push_back(path);
    out << fmt::format("seed {}: wrote {}\n", seed, path);

    if (o.full_history && !model) {
      const auto folds = split_folds(data, o.folds, seed);
      const auto fh_path = (fs::path(o.out) / fmt::format("full_history_seed{}.csv", seed)).string();
      std::ofstream fh(fh_path);
      fh << "fold,fbc_auc,logistic_auc\n";
      double fbc_sum = 0, log_sum = 0;
      for (int f = 0; f < o.folds; ++f) {
        const auto trained = train_mf(folds[f].train, cfg.hp);
        const double a = full_history_auc(trained.model, folds[f].test);
        const double b = full_history_auc(train_logistic(folds[f].train, cfg.logistic), folds[f].test);
        fbc_sum += a;
        log_sum += b;
        fh << fmt::format("{},{:.10g},{:.10g}\n", f, a, b);
      }
      fh << fmt::format("mean,{:.10g},{:.10g}\n", fbc_sum / o.folds, log_sum / o.folds);
      man.outputs.push_back(fh_path);
      out << fmt::format("seed {}: full-history AUC fbc {:.4f} logistic {:.4f}\n", seed, fbc_sum / o.folds,
                         log_sum / o.folds);
    }
  }
  return 0;
}

int cmd_bench(const Options& o, Manifest& man, std::ostream& out) {
  BenchConfig cfg;
  cfg.d = o.bench_d;
  cfg.n_candidates = o.bench_candidates;
  cfg.a_sizes = o.bench_sizes;
  cfg.repetitions = o.bench_reps;
  cfg.warmup = o.bench_warmup;
  cfg.lambda = o.lambda;
  cfg.seed = o.seed.front();
  const auto rows = bench_selection(cfg);
  const auto path = (fs::path(o.out) / "timing.csv").string();
  write_timing_csv(rows, path);
  man.outputs.push_back(path);
  for (const auto& r : rows) {
    out << fmt::format("{:12} |A|={:4} mean {:.3e} s  ci95 {:.1e}\n", r.mode, r.a_size, r.mean_s, r.ci95_s);
  }
  return 0;
}

int cmd_selftest(const Options& o, std::ostream& out) {
  const auto seed = o.seed.front();
  const std::vector<props::PropertyResult> results{
      props::closed_form_vs_quadrature(o.selftest_instances, seed),
      props::incremental_vs_direct(o.selftest_sessions, seed),
      props::classify_matches_posterior(10000, seed),
  };
  bool ok = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " | " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}' for hashing", path));
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[k]);
  return hex.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Active inference of a private binary user attribute from solicited ratings", "agenda-infer"};
  Options o;
  add_options(app, o);
  app.set_config("--config", "", "flat key = value configuration file");
  app.allow_config_extras(CLI::config_extras_mode::error);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the effective configuration");
  app.fallthrough();
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands{
      {"ingest", "parse and filter raw data into a CSV snapshot"},
      {"train", "fit the factorization model"},
      {"cv", "cross-validate hyperparameters"},
      {"simulate", "simulate interrogation sessions and write report CSVs"},
      {"bench", "time direct vs incremental selection"},
      {"selftest", "run the numerical property suites"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  if (args.size() <= 1) {
    out << app.help();
    return 2;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "agenda-infer: " << e.what() << "\n";
    err << "run 'agenda-infer --help' for usage\n";
    return 2;
  }

  std::string command;
  for (const auto* sub : app.get_subcommands()) command = sub->get_name();
  const std::string config = app.config_to_str(true, false);
  if (print_config) out << config;

  try {
    if (o.seed.empty()) throw UsageError("--seed needs at least one value");
    if (command == "selftest") return cmd_selftest(o, out);
    fs::create_directories(o.out);
    Manifest man;
    int rc = 0;
    if (command == "ingest") rc = cmd_ingest(o, man, out);
    if (command == "train") rc = cmd_train(o, man, out);
    if (command == "cv") rc = cmd_cv(o, man, out);
    if (command == "simulate") rc = cmd_simulate(o, man, out);
    if (command == "bench") rc = cmd_bench(o, man, out);
    write_manifest(o.out, command, config, o, man);
    return rc;
  } catch (const UsageError& e) {
    err << "agenda-infer: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "agenda-infer: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace agenda::cli
