// poisfact: split, train, evaluate and recommend from count triplet files.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "poisfact/poisfact.hpp"

namespace fs = std::filesystem;
using namespace poisfact;

namespace {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kNumeric = 4,
  kMismatch = 5,
};

struct InputFormat {
  std::string format = "csv";
  bool header = false;

  char delimiter() const { return format == "tsv" ? '\t' : ','; }
  std::string extension() const { return format == "tsv" ? ".tsv" : ".csv"; }
};

struct MapPaths {
  std::string users;
  std::string items;

  bool given() const { return !users.empty() || !items.empty(); }
};

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

std::vector<RawTriplet> read_triplets(const std::string& path, const InputFormat& fmt) {
  auto in = open_in(path);
  try {
    return parse_triplets(in, fmt.delimiter(), fmt.header);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

IdMap read_maps(const MapPaths& maps, char delimiter) {
  if (maps.users.empty() || maps.items.empty())
    throw ConfigError("--user-map and --item-map must be given together");
  IdMap ids;
  auto u = open_in(maps.users);
  ids.users = read_id_table(u, delimiter);
  auto i = open_in(maps.items);
  ids.items = read_id_table(i, delimiter);
  return ids;
}

/// Training data plus the identifier domain it lives in. With map files the
/// domain is fixed by them; otherwise ids follow first appearance in `path`.
Dataset load_training(const std::string& path, const InputFormat& fmt, const MapPaths& maps) {
  auto triplets = read_triplets(path, fmt);
  if (!maps.given()) return build_interactions(triplets);
  if (triplets.empty()) throw EmptyDatasetError();
  Dataset ds;
  ds.ids = read_maps(maps, fmt.delimiter());
  std::size_t unknown = 0;
  auto entries = resolve_triplets(triplets, ds.ids, &unknown);
  if (unknown > 0)
    throw DataMismatch(path + ": " + std::to_string(unknown) + " triplets use ids missing from the maps");
  ds.data = SparseInteractions::from_entries(ds.ids.users.size(), ds.ids.items.size(), std::move(entries));
  return ds;
}

LoadedModel read_model(const std::string& path) {
  auto in = open_in(path);
  return load_model(in);
}

void check_dimensions(const FactorModel& model, const SparseInteractions& data) {
  if (model.users() != data.rows() || model.items() != data.cols())
    throw DataMismatch("model is " + std::to_string(model.users()) + " users x " +
                       std::to_string(model.items()) + " items but the training data has " +
                       std::to_string(data.rows()) + " x " + std::to_string(data.cols()));
}

/// Writes through a temporary file so a failed write never leaves a partial output.
template <typename Fn>
void write_file(const fs::path& path, bool binary, Fn&& fn) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    fn(out);
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move output into place at '" + path.string() + "'");
}

// ---------------------------------------------------------------- split

struct SplitArgs {
  std::string input;
  std::string output_dir;
  double fraction = kDefaultTestFraction;
  std::size_t min_entries = kDefaultMinTestEntries;
  std::uint64_t seed = 42;
  InputFormat fmt;
};

int cmd_split(const SplitArgs& a) {
  if (!(a.fraction > 0.0 && a.fraction < 1.0)) {
    std::cerr << "error: --test-fraction must lie in (0, 1)\n";
    return kUsage;
  }
  const auto ds = build_interactions(read_triplets(a.input, a.fmt));
  const auto split = split_train_test(ds.data, a.fraction, a.min_entries, a.seed);

  fs::create_directories(a.output_dir);
  const fs::path dir(a.output_dir);
  const char d = a.fmt.delimiter();
  const auto train_entries = split.train.entries();
  write_file(dir / ("train" + a.fmt.extension()), false,
             [&](std::ostream& o) { write_triplets(o, train_entries, ds.ids, d); });
  write_file(dir / ("test" + a.fmt.extension()), false,
             [&](std::ostream& o) { write_triplets(o, split.test, ds.ids, d); });
  write_file(dir / "users.map", false, [&](std::ostream& o) { write_id_table(o, ds.ids.users, d); });
  write_file(dir / "items.map", false, [&](std::ostream& o) { write_id_table(o, ds.ids.items, d); });

  std::cout << "users=" << ds.data.rows() << " items=" << ds.data.cols()
            << " train_entries=" << split.train.nnz() << " test_entries=" << split.test.size() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string train_path;
  std::string model_out;
  std::string solver = "proxgrad";
  std::string reg = "l2";
  std::size_t factors = 40;
  double alpha = 1e-7;
  double lambda = 1e9;
  int iters = 10;
  int tau = 1;
  int cg_updates = 5;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  bool lambda_given = false;
  bool iters_given = false;
  std::string export_text;
  bool quiet = false;
  InputFormat fmt;
  MapPaths maps;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig config = a.solver == "cg" ? TrainConfig::conj_grad_defaults()
                                        : TrainConfig::prox_grad_defaults();
  config.k = a.factors;
  config.alpha = a.alpha;
  if (a.lambda_given) config.lambda = a.lambda;
  if (a.iters_given) config.iterations = a.iters;
  config.solver.tau = a.tau;
  config.solver.cg_max_updates = a.cg_updates;
  config.reg = a.reg == "l1" ? RegKind::L1 : RegKind::L2;
  config.seed = a.seed;
  config.threads = a.threads;
  try {
    config.validate();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  const auto ds = load_training(a.train_path, a.fmt, a.maps);
  auto progress = [&](const IterationProgress& p) {
    if (!a.quiet)
      std::cout << "iteration " << p.iteration << " objective=" << detail::format_real(p.objective)
                << " seconds=" << p.seconds << std::endl;
  };
  auto [model, report] = train(ds.data, config, progress);

  const auto header = make_header(model, config);
  write_file(a.model_out, true, [&](std::ostream& o) { save_model(o, model, header); });
  if (!a.export_text.empty())
    write_file(a.export_text, false, [&](std::ostream& o) { write_model_text(o, model, &ds.ids); });
  if (!a.quiet)
    std::cout << "final_objective=" << detail::format_real(report.final_objective)
              << " clamp_events=" << report.clamp_events
              << " zero_user_rows=" << report.zero_user_rows
              << " zero_item_rows=" << report.zero_item_rows << '\n';
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string model_path;
  std::string train_path;
  std::string test_path;
  std::size_t sample_users = 25000;
  std::size_t cutoff = 5;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  std::string output;
  InputFormat fmt;
  MapPaths maps;
};

int cmd_evaluate(const EvaluateArgs& a) {
  if (a.sample_users < 1 || a.cutoff < 1) {
    std::cerr << "error: --sample-users and --cutoff must be at least 1\n";
    return kUsage;
  }
  const auto loaded = read_model(a.model_path);
  auto ds = load_training(a.train_path, a.fmt, a.maps);
  check_dimensions(loaded.model, ds.data);

  const auto test_triplets = read_triplets(a.test_path, a.fmt);
  std::size_t unknown = 0;
  auto test = resolve_triplets(test_triplets, ds.ids, &unknown);
  if (unknown > 0) {
    if (a.maps.given())
      throw DataMismatch(a.test_path + ": " + std::to_string(unknown) +
                         " triplets use ids missing from the maps");
    std::cerr << "warning: dropped " << unknown
              << " test triplets whose user or item does not occur in the training file\n";
  }
  std::sort(test.begin(), test.end(), [](const Entry& x, const Entry& y) {
    return x.user != y.user ? x.user < y.user : x.item < y.item;
  });

  SplitPair split{std::move(ds.data), std::move(test)};
  const auto report = evaluate(loaded.model, split, {a.cutoff, a.sample_users, a.seed, a.threads});
  std::cout << to_key_value(report);
  if (!a.output.empty())
    write_file(a.output, false, [&](std::ostream& o) { o << to_json(report).dump(2) << '\n'; });
  return kOk;
}

// ---------------------------------------------------------------- recommend

struct RecommendArgs {
  std::string model_path;
  std::string train_path;
  std::string user;
  std::size_t top_n = 10;
  InputFormat fmt;
  MapPaths maps;
};

int cmd_recommend(const RecommendArgs& a) {
  const auto loaded = read_model(a.model_path);
  const auto ds = load_training(a.train_path, a.fmt, a.maps);
  check_dimensions(loaded.model, ds.data);

  const auto u = ds.ids.users.find(a.user);
  if (!u) throw DataMismatch("unknown user '" + a.user + "'");
  const auto scores = score_user(loaded.model, *u);
  const auto ranked = rank_items(scores, ds.data.row(*u).indices, a.top_n);
  const char d = a.fmt.delimiter();
  for (index_t i : ranked)
    std::cout << a.user << d << ds.ids.items.token(i) << d << detail::format_real(scores[i]) << '\n';
  return kOk;
}

void add_format_flags(CLI::App* cmd, InputFormat& fmt) {
  cmd->add_option("--format", fmt.format, "Triplet file delimiter")
      ->check(CLI::IsMember({"csv", "tsv"}))
      ->capture_default_str();
  cmd->add_flag("--header", fmt.header, "Input triplet files start with a header line");
}

void add_map_flags(CLI::App* cmd, MapPaths& maps) {
  cmd->add_option("--user-map", maps.users, "User id table written by 'split'");
  cmd->add_option("--item-map", maps.items, "Item id table written by 'split'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisson matrix factorization for implicit-feedback counts"};
  app.require_subcommand(1);

  SplitArgs split_args;
  auto* split = app.add_subcommand("split", "Hold out a random test set");
  split->add_option("input", split_args.input, "Triplet file (user, item, count)")->required();
  split->add_option("output_dir", split_args.output_dir, "Directory for train/test/map files")->required();
  split->add_option("--test-fraction", split_args.fraction, "Held-out share of entries")->capture_default_str();
  split->add_option("--min-test-entries", split_args.min_entries,
                    "Drop test users with fewer held-out entries")->capture_default_str();
  split->add_option("--seed", split_args.seed)->capture_default_str();
  add_format_flags(split, split_args.fmt);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Fit factors to a triplet file");
  train_cmd->add_option("train", train_args.train_path, "Training triplet file")->required();
  train_cmd->add_option("model", train_args.model_out, "Output model file")->required();
  train_cmd->add_option("--factors,-k", train_args.factors, "Rank k")->capture_default_str();
  train_cmd->add_option("--alpha", train_args.alpha, "Initial step size (proxgrad)")->capture_default_str();
  auto* lambda_opt = train_cmd->add_option("--lambda", train_args.lambda,
                                           "Regularization (default 1e9 proxgrad, 0 cg)");
  auto* iters_opt = train_cmd->add_option("--iters", train_args.iters,
                                          "Outer iterations (default 10 proxgrad, 30 cg)");
  train_cmd->add_option("--tau", train_args.tau, "Prox-grad updates per vector per iteration")
      ->capture_default_str();
  train_cmd->add_option("--cg-updates", train_args.cg_updates, "CG updates per vector per iteration")
      ->capture_default_str();
  train_cmd->add_option("--solver", train_args.solver)
      ->check(CLI::IsMember({"proxgrad", "cg"}))
      ->capture_default_str();
  train_cmd->add_option("--reg", train_args.reg)->check(CLI::IsMember({"l2", "l1"}))->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed)->capture_default_str();
  train_cmd->add_option("--threads", train_args.threads)->capture_default_str();
  train_cmd->add_option("--export-text", train_args.export_text, "Also write factors as text");
  train_cmd->add_flag("--quiet", train_args.quiet, "Suppress the iteration trace");
  add_format_flags(train_cmd, train_args.fmt);
  add_map_flags(train_cmd, train_args.maps);

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Ranking and likelihood metrics on a test file");
  eval_cmd->add_option("model", eval_args.model_path)->required();
  eval_cmd->add_option("train", eval_args.train_path)->required();
  eval_cmd->add_option("test", eval_args.test_path)->required();
  eval_cmd->add_option("--sample-users", eval_args.sample_users)->capture_default_str();
  eval_cmd->add_option("--cutoff", eval_args.cutoff, "K in P@K")->capture_default_str();
  eval_cmd->add_option("--seed", eval_args.seed)->capture_default_str();
  eval_cmd->add_option("--threads", eval_args.threads)->capture_default_str();
  eval_cmd->add_option("--output", eval_args.output, "Write the report as JSON");
  add_format_flags(eval_cmd, eval_args.fmt);
  add_map_flags(eval_cmd, eval_args.maps);

  RecommendArgs rec_args;
  auto* rec_cmd = app.add_subcommand("recommend", "Top-N unseen items for one user");
  rec_cmd->add_option("model", rec_args.model_path)->required();
  rec_cmd->add_option("train", rec_args.train_path)->required();
  rec_cmd->add_option("user", rec_args.user)->required();
  rec_cmd->add_option("--top-n", rec_args.top_n)->capture_default_str();
  add_format_flags(rec_cmd, rec_args.fmt);
  add_map_flags(rec_cmd, rec_args.maps);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  train_args.lambda_given = lambda_opt->count() > 0;
  train_args.iters_given = iters_opt->count() > 0;

  try {
    if (*split) return cmd_split(split_args);
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_evaluate(eval_args);
    if (*rec_cmd) return cmd_recommend(rec_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataMismatch& e) {
    std::cerr << "data mismatch: " << e.what() << '\n';
    return kMismatch;
  } catch (const EvaluationError& e) {
    std::cerr << "evaluation error: " << e.what() << '\n';
    return kMismatch;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
