// pronet command line: train / eval / sweep / inspect / extract / rerank / synth
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pronet/config.hpp"
#include "pronet/eval.hpp"
#include "pronet/plot.hpp"
#include "pronet/prototypes.hpp"
#include "pronet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pronet;

namespace {

struct GlobalOpts {
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = true;
};

void apply_overrides(RunConfig& cfg, const GlobalOpts& g) {
  if (!g.out.empty()) cfg.out = g.out;
  if (g.seed_set) cfg.seed = g.seed;
  cfg.deterministic = g.deterministic;
}

void write_snapshot(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.json");
  out << cfg.to_json().dump(2) << "\n";
}

// Accepts either a container directory or a run directory holding one.
fs::path resolve_checkpoint(const std::string& path) {
  if (fs::exists(fs::path(path) / "manifest.json")) return path;
  if (fs::exists(fs::path(path) / "checkpoint" / "manifest.json"))
    return fs::path(path) / "checkpoint";
  throw IoError("no checkpoint found at " + path);
}

struct LoadedRun {
  RunConfig cfg;
  Dataset ds;
  std::unique_ptr<Model> model;
};

LoadedRun load_run(const std::string& checkpoint_path, const GlobalOpts& g) {
  const fs::path dir = resolve_checkpoint(checkpoint_path);
  const Container ckpt = load_container(dir.string());
  if (!ckpt.meta.contains("config"))
    throw IoError("checkpoint has no embedded config snapshot");
  LoadedRun run;
  run.cfg = RunConfig::from_json(ckpt.meta.at("config"));
  apply_overrides(run.cfg, g);
  run.ds = build_dataset(run.cfg);
  run.model = std::make_unique<Model>(
      [&] {
        // reuse the standard wiring, then overwrite the weights
        return build_model(run.cfg, run.ds).config();
      }(),
      mix_seed(run.cfg.seed, 0x30DE1ull));
  Adam scratch(run.cfg.optim, run.model->params());
  apply_checkpoint(ckpt, *run.model, scratch);
  return run;
}

std::string metrics_row(const std::string& tag, const EvalResult& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << tag << ',' << r.mean_ap << ',' << r.rank(1) << ','
     << r.rank(std::min<std::size_t>(5, r.cmc.size())) << ','
     << r.rank(std::min<std::size_t>(10, r.cmc.size()));
  return os.str();
}

EvalResult run_eval(Model& model, const Dataset& ds, FeatureKind kind,
                    int max_rank, int batch_size) {
  const EvalSet set = extract_eval_set(model, ds, kind, batch_size);
  return evaluate_set(set, Metric::Cosine, max_rank);
}

// one full training pass; returns the trained model for further evaluation
std::unique_ptr<Model> train_run(const RunConfig& cfg, const Dataset& ds,
                                 const std::string& run_dir) {
  auto model = std::make_unique<Model>(build_model(cfg, ds).config(),
                                       mix_seed(cfg.seed, 0x30DE1ull));
  OptimConfig ocfg = cfg.optim;
  ocfg.seed = cfg.seed;
  Adam adam(ocfg, model->params());
  const TrainResult result =
      train_model(*model, adam, ds, ocfg, cfg.batch, cfg.triplet, cfg.epsilon,
                  cfg.augment, run_dir, cfg.to_json());
  if (!run_dir.empty() && !result.log.empty()) {
    std::vector<double> xs, total;
    for (const auto& row : result.log) {
      xs.push_back(row.step);
      total.push_back(row.bundle.total);
    }
    plot_lines((fs::path(run_dir) / "loss.png").string(), xs,
               {{"total loss", total}}, "training loss", "step", "loss");
  }
  return model;
}

int cmd_train(const std::string& config_path, const GlobalOpts& g) {
  RunConfig cfg = RunConfig::load_file(config_path);
  apply_overrides(cfg, g);
  const Dataset ds = build_dataset(cfg);
  write_snapshot(cfg, cfg.out);
  auto model = train_run(cfg, ds, cfg.out);
  std::cout << "run directory: " << cfg.out << "\n";
  if (!ds.query_indices.empty() && !ds.gallery_indices.empty()) {
    const EvalResult r = run_eval(*model, ds, cfg.eval_kind, cfg.eval_max_rank,
                                  cfg.eval_batch_size);
    std::ofstream csv(fs::path(cfg.out) / "eval.csv");
    csv << "feature,mAP,rank1,rank5,rank10\n"
        << metrics_row(feature_kind_name(cfg.eval_kind), r) << "\n";
    std::cout << "eval (" << feature_kind_name(cfg.eval_kind)
              << "): mAP=" << r.mean_ap << " rank1=" << r.rank(1) << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& kind_name,
             std::vector<double> rerank_args, const GlobalOpts& g) {
  LoadedRun run = load_run(checkpoint, g);
  const FeatureKind kind =
      kind_name.empty() ? run.cfg.eval_kind : feature_kind_from_name(kind_name);
  const EvalSet set =
      extract_eval_set(*run.model, run.ds, kind, run.cfg.eval_batch_size);
  const EvalResult plain = evaluate_set(set, Metric::Cosine, run.cfg.eval_max_rank);

  const fs::path out_dir = g.out.empty()
                               ? resolve_checkpoint(checkpoint).parent_path()
                               : fs::path(g.out);
  fs::create_directories(out_dir);
  write_snapshot(run.cfg, out_dir);
  std::ofstream csv(out_dir / "eval.csv");
  csv << "feature,mAP,rank1,rank5,rank10\n";
  csv << metrics_row(feature_kind_name(kind), plain) << "\n";
  std::cout << metrics_row(feature_kind_name(kind), plain) << "\n";

  if (!rerank_args.empty()) {
    if (rerank_args.size() != 3)
      throw ConfigError("--rerank expects three values: k1 k2 lambda");
    const MatD dist =
        rerank(set.query_features, set.gallery_features,
               static_cast<int>(rerank_args[0]), static_cast<int>(rerank_args[1]),
               rerank_args[2], Metric::Cosine);
    const EvalResult rr = evaluate(dist, set.query_pids, set.query_camids,
                                   set.gallery_pids, set.gallery_camids,
                                   run.cfg.eval_max_rank);
    csv << metrics_row(feature_kind_name(kind) + "+rerank", rr) << "\n";
    std::cout << metrics_row(feature_kind_name(kind) + "+rerank", rr) << "\n";
  }
  return 0;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / v.size());
}

int cmd_sweep(const std::string& config_path, const std::string& axis,
              const std::vector<std::string>& values,
              const std::vector<std::uint64_t>& subset_seeds, const GlobalOpts& g) {
  RunConfig base = RunConfig::load_file(config_path);
  apply_overrides(base, g);
  fs::create_directories(base.out);
  write_snapshot(base, base.out);

  std::ofstream csv(fs::path(base.out) / ("sweep_" + axis + ".csv"));
  std::vector<double> xs, ys;

  if (axis == "prototype_fraction") {
    // one training run, then bank subsets of varying size
    const Dataset ds = build_dataset(base);
    auto model = train_run(base, ds, (fs::path(base.out) / "base_run").string());
    std::vector<double> fractions;
    for (const auto& v : values) fractions.push_back(std::stod(v));
    std::vector<std::uint64_t> seeds = subset_seeds;
    if (seeds.empty()) seeds = {1, 2, 3};
    const auto rows =
        ablate_prototypes(*model, ds, base.eval_kind, fractions, seeds,
                          Metric::Cosine, base.eval_max_rank, base.eval_batch_size);
    csv << "fraction,mAP_mean,mAP_std,rank1_mean\n";
    for (double f : fractions) {
      std::vector<double> maps, r1s;
      for (const auto& row : rows)
        if (row.fraction == f) {
          maps.push_back(row.mean_ap);
          r1s.push_back(row.rank1);
        }
      csv << f << ',' << mean_of(maps) << ',' << std_of(maps) << ','
          << mean_of(r1s) << "\n";
      xs.push_back(f);
      ys.push_back(mean_of(maps));
    }
  } else {
    csv << axis << ",mAP,rank1\n";
    for (const auto& v : values) {
      RunConfig cfg = base;
      if (axis == "margin") {
        cfg.triplet.margin = std::stod(v);
      } else if (axis == "parts") {
        if (cfg.model_kind != ModelKind::ProNetPP)
          throw ConfigError("sweep axis 'parts' requires model pronetpp");
        cfg.parts.num_parts = std::stoi(v);
      } else if (axis == "pooling") {
        cfg.pooling = pooling_from_name(v);
      } else if (axis == "image_size") {
        if (cfg.dataset_type != "synthetic")
          throw ConfigError("sweep axis 'image_size' requires a synthetic dataset");
        const auto sep = v.find('x');
        if (sep == std::string::npos)
          throw ConfigError("image_size values look like 64x32");
        cfg.synthetic.image_height = std::stoi(v.substr(0, sep));
        cfg.synthetic.image_width = std::stoi(v.substr(sep + 1));
      } else {
        throw ConfigError("unknown sweep axis: " + axis);
      }
      cfg.validate();
      cfg.out = (fs::path(base.out) / (axis + "_" + v)).string();
      const Dataset ds = build_dataset(cfg);
      write_snapshot(cfg, cfg.out);
      auto model = train_run(cfg, ds, cfg.out);
      const EvalResult r = run_eval(*model, ds, cfg.eval_kind, cfg.eval_max_rank,
                                    cfg.eval_batch_size);
      csv << v << ',' << r.mean_ap << ',' << r.rank(1) << "\n";
      if (axis != "pooling" && axis != "image_size") xs.push_back(std::stod(v));
      ys.push_back(r.mean_ap);
      std::cout << axis << "=" << v << " mAP=" << r.mean_ap << "\n";
    }
  }
  if (xs.size() == ys.size() && xs.size() > 1)
    plot_lines((fs::path(base.out) / ("sweep_" + axis + ".png")).string(), xs,
               {{"mAP", ys}}, "sweep over " + axis, axis, "mAP");
  std::cout << "sweep CSV: "
            << (fs::path(base.out) / ("sweep_" + axis + ".csv")).string() << "\n";
  return 0;
}

int cmd_inspect(const std::string& checkpoint, int query_index, int k,
                const GlobalOpts& g) {
  LoadedRun run = load_run(checkpoint, g);
  const EvalSet set = extract_eval_set(*run.model, run.ds, run.cfg.eval_kind,
                                       run.cfg.eval_batch_size);
  const int nq = static_cast<int>(set.query_features.rows());
  if (query_index < 0 || query_index >= nq)
    throw ConfigError("query index out of range (have " + std::to_string(nq) +
                      " queries)");
  if (k < 1) throw ConfigError("k must be >= 1");

  const MatD dist =
      cross_distance(set.query_features, set.gallery_features, Metric::Cosine);
  std::vector<int> order(set.gallery_pids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dist(query_index, a) < dist(query_index, b);
  });

  const fs::path out_dir = g.out.empty()
                               ? resolve_checkpoint(checkpoint).parent_path()
                               : fs::path(g.out);
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "inspect.csv");
  csv << "rank,gallery_index,pid,camid,distance,correct\n";
  int shown = 0;
  for (int gidx : order) {
    if (set.gallery_pids[gidx] == -1) continue;
    if (set.gallery_pids[gidx] == set.query_pids[query_index] &&
        set.gallery_camids[gidx] == set.query_camids[query_index])
      continue;
    const bool correct = set.gallery_pids[gidx] == set.query_pids[query_index];
    csv << shown + 1 << ',' << gidx << ',' << set.gallery_pids[gidx] << ','
        << set.gallery_camids[gidx] << ',' << dist(query_index, gidx) << ','
        << (correct ? 1 : 0) << "\n";
    if (++shown == k) break;
  }

  // nearest prototypes of the projected query feature
  PrototypeBank& bank = run.model->bank_for(
      run.cfg.eval_kind == FeatureKind::FTildeS || run.cfg.eval_kind == FeatureKind::FTilde
          ? FeatureKind::FTildeS
          : FeatureKind::FS);
  const FeatureKind proj_kind =
      run.cfg.model_kind == ModelKind::ProNetPP &&
              (run.cfg.eval_kind == FeatureKind::FTilde ||
               run.cfg.eval_kind == FeatureKind::FTildeS)
          ? FeatureKind::FTildeS
          : FeatureKind::FS;
  const std::vector<const Image*> one{
      &run.ds.records[run.ds.query_indices[query_index]].image};
  const MatF fs_row = run.model->extract(one, proj_kind);
  const int kk = std::min(k, bank.num_classes());
  const auto top = top_prototypes(fs_row.row(0).transpose(), kk);
  csv << "prototype_rank,class_index,softmax_score\n";
  double sum = 0.0;
  for (std::size_t i = 0; i < top.size(); ++i) {
    csv << i + 1 << ',' << top[i].first << ',' << top[i].second << "\n";
    sum += top[i].second;
  }
  std::cout << "inspect CSV: " << (out_dir / "inspect.csv").string()
            << " (top-" << top.size() << " prototype mass " << sum << ")\n";
  return 0;
}

int cmd_extract(const std::string& checkpoint, const std::string& kind_name,
                const GlobalOpts& g) {
  LoadedRun run = load_run(checkpoint, g);
  const FeatureKind kind =
      kind_name.empty() ? run.cfg.eval_kind : feature_kind_from_name(kind_name);
  const EvalSet set =
      extract_eval_set(*run.model, run.ds, kind, run.cfg.eval_batch_size);
  const fs::path out_dir =
      g.out.empty() ? fs::path("features_" + feature_kind_name(kind))
                    : fs::path(g.out);
  save_eval_set(set, out_dir.string());
  write_snapshot(run.cfg, out_dir);
  std::cout << "features written to " << out_dir.string() << "\n";
  return 0;
}

int cmd_rerank(const std::string& features_dir, int k1, int k2, double lambda,
               const GlobalOpts& g) {
  const EvalSet set = load_eval_set(features_dir);
  const EvalResult plain = evaluate_set(set, Metric::Cosine);
  const MatD dist = rerank(set.query_features, set.gallery_features, k1, k2,
                           lambda, Metric::Cosine);
  const EvalResult rr = evaluate(dist, set.query_pids, set.query_camids,
                                 set.gallery_pids, set.gallery_camids, 50);
  const fs::path out_dir = g.out.empty() ? fs::path(features_dir) : fs::path(g.out);
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "rerank.csv");
  csv << "feature,mAP,rank1,rank5,rank10\n"
      << metrics_row("original", plain) << "\n"
      << metrics_row("reranked", rr) << "\n";
  std::cout << metrics_row("original", plain) << "\n"
            << metrics_row("reranked", rr) << "\n";
  return 0;
}

int cmd_synth(const std::string& config_path, const GlobalOpts& g) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = RunConfig::load_file(config_path);
  apply_overrides(cfg, g);
  if (g.seed_set) cfg.synthetic.seed = g.seed;
  const Dataset ds = generate_synthetic(cfg.synthetic);
  const std::string out = g.out.empty() ? "synthetic_dataset" : g.out;
  save_dataset(ds, out);
  write_snapshot(cfg, out);
  std::cout << "wrote " << ds.num_images() << " images ("
            << ds.num_identities() << " train identities) to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"person re-identification by projection on class prototypes"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts g;
  app.add_option("--out", g.out, "output directory override");
  app.add_option("--seed", g.seed, "seed override")
      ->each([&](const std::string&) { g.seed_set = true; });
  app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
               "deterministic mode (default on)");

  std::string config_path, checkpoint, kind_name, axis, features_dir;
  std::vector<std::string> values;
  std::vector<std::uint64_t> subset_seeds;
  std::vector<double> rerank_args;
  int query_index = 0, k = 10, k1 = 20, k2 = 6;
  double lambda = 0.3;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "run config (json)")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint or run directory")->required();
  eval->add_option("--feature-kind", kind_name, "f | f_s | f_tilde | f_tilde_s");
  eval->add_option("--rerank", rerank_args, "k1 k2 lambda")->expected(3);

  auto* sweep = app.add_subcommand("sweep", "train/evaluate along one axis");
  sweep->add_option("--config", config_path, "base run config (json)")->required();
  sweep->add_option("--axis", axis, "margin | parts | prototype_fraction | pooling | image_size")
      ->required();
  sweep->add_option("--values", values, "axis values")->required();
  sweep->add_option("--subset-seeds", subset_seeds,
                    "prototype subset seeds (prototype_fraction only)");

  auto* inspect = app.add_subcommand("inspect", "rank one query and its prototypes");
  inspect->add_option("--checkpoint", checkpoint)->required();
  inspect->add_option("--query-index", query_index, "index into the query split");
  inspect->add_option("-k,--top-k", k, "rows to emit");

  auto* extract = app.add_subcommand("extract", "export query/gallery features");
  extract->add_option("--checkpoint", checkpoint)->required();
  extract->add_option("--feature-kind", kind_name);

  auto* rr = app.add_subcommand("rerank", "re-rank exported features");
  rr->add_option("--features", features_dir, "exported feature directory")->required();
  rr->add_option("--k1", k1);
  rr->add_option("--k2", k2);
  rr->add_option("--lambda", lambda);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset to disk");
  synth->add_option("--config", config_path, "run config with a synthetic section");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, g);
    if (eval->parsed()) return cmd_eval(checkpoint, kind_name, rerank_args, g);
    if (sweep->parsed()) return cmd_sweep(config_path, axis, values, subset_seeds, g);
    if (inspect->parsed()) return cmd_inspect(checkpoint, query_index, k, g);
    if (extract->parsed()) return cmd_extract(checkpoint, kind_name, g);
    if (rr->parsed()) return cmd_rerank(features_dir, k1, k2, lambda, g);
    if (synth->parsed()) return cmd_synth(config_path, g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
