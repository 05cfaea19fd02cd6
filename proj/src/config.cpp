#include "pronet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace pronet {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& scope) {
  if (!j.is_object()) throw ConfigError("config: '" + scope + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + scope + "." + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string pooling_name(Pooling p) {
  switch (p) {
    case Pooling::Gap: return "gap";
    case Pooling::Gmp: return "gmp";
    default: return "gem";
  }
}

Pooling pooling_from_name(const std::string& s) {
  if (s == "gap") return Pooling::Gap;
  if (s == "gmp") return Pooling::Gmp;
  if (s == "gem") return Pooling::Gem;
  throw ConfigError("unknown pooling: " + s);
}

std::string metric_name(Metric m) {
  return m == Metric::Euclidean ? "euclidean" : "cosine";
}

Metric metric_from_name(const std::string& s) {
  if (s == "euclidean") return Metric::Euclidean;
  if (s == "cosine") return Metric::Cosine;
  throw ConfigError("unknown metric: " + s);
}

nlohmann::json RunConfig::to_json() const {
  json j;
  j["model"] = model_kind == ModelKind::ProNet ? "pronet" : "pronetpp";
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["out"] = out;
  j["epsilon"] = epsilon;
  j["pooling"] = pooling_name(pooling);
  j["dataset"] = {{"type", dataset_type}, {"path", dataset_path}};
  j["dataset"]["synthetic"] = {{"num_ids", synthetic.num_ids},
                               {"images_per_id", synthetic.images_per_id},
                               {"num_cameras", synthetic.num_cameras},
                               {"image_height", synthetic.image_height},
                               {"image_width", synthetic.image_width},
                               {"seed", synthetic.seed},
                               {"test_ids", synthetic.test_ids},
                               {"query_per_id", synthetic.query_per_id},
                               {"translate_px", synthetic.translate_px},
                               {"color_jitter", synthetic.color_jitter},
                               {"noise_std", synthetic.noise_std},
                               {"cam_tint_amp", synthetic.cam_tint_amp},
                               {"cam_contrast_amp", synthetic.cam_contrast_amp}};
  j["backbone"] = {{"widths", backbone.widths},
                   {"strides", backbone.strides},
                   {"final_stage_stride", backbone.final_stage_stride}};
  j["batch"] = {{"p", batch.identities_per_batch}, {"k", batch.images_per_identity}};
  j["parts"] = {{"num_parts", parts.num_parts},
                {"part_dim", parts.part_dim},
                {"reduction", parts.reduction}};
  j["triplet"] = {{"enabled", triplet.enabled},
                  {"margin", triplet.margin},
                  {"metric", metric_name(triplet.metric)},
                  {"target", triplet.target == TripletTarget::ProjectedFeature
                                 ? "projected_feature"
                                 : "raw_feature"},
                  {"variant", triplet.variant == TripletVariant::BatchHard
                                  ? "batch_hard"
                                  : "batch_all"}};
  j["optim"] = {{"base_lr", optim.base_lr},
                {"warmup_start_lr", optim.warmup_start_lr},
                {"warmup_epochs", optim.warmup_epochs},
                {"decay_epochs", optim.decay_epochs},
                {"decay_factor", optim.decay_factor},
                {"weight_decay", optim.weight_decay},
                {"total_epochs", optim.total_epochs},
                {"beta1", optim.beta1},
                {"beta2", optim.beta2},
                {"checkpoint_interval", optim.checkpoint_interval}};
  j["augment"] = {{"flip_prob", augment.flip_prob},
                  {"pad_pixels", augment.pad_pixels},
                  {"crop", augment.crop},
                  {"erase_prob", augment.erase_prob},
                  {"erase_area", {augment.erase_area_lo, augment.erase_area_hi}},
                  {"erase_aspect", {augment.erase_aspect_lo, augment.erase_aspect_hi}}};
  j["eval"] = {{"feature_kind", feature_kind_name(eval_kind)},
               {"max_rank", eval_max_rank},
               {"batch_size", eval_batch_size}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  check_keys(j, {"model", "seed", "deterministic", "out", "epsilon", "pooling",
                 "dataset", "backbone", "batch", "parts", "triplet", "optim",
                 "augment", "eval"},
             "");
  if (j.contains("model")) {
    const std::string m = j.at("model");
    if (m == "pronet") cfg.model_kind = ModelKind::ProNet;
    else if (m == "pronetpp") cfg.model_kind = ModelKind::ProNetPP;
    else throw ConfigError("config: model must be pronet or pronetpp");
  }
  read(j, "seed", cfg.seed);
  read(j, "deterministic", cfg.deterministic);
  read(j, "out", cfg.out);
  read(j, "epsilon", cfg.epsilon);
  if (j.contains("pooling")) cfg.pooling = pooling_from_name(j.at("pooling"));

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, {"type", "path", "synthetic"}, "dataset");
    read(d, "type", cfg.dataset_type);
    read(d, "path", cfg.dataset_path);
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      check_keys(s,
                 {"num_ids", "images_per_id", "num_cameras", "image_height",
                  "image_width", "seed", "test_ids", "query_per_id",
                  "translate_px", "color_jitter", "noise_std", "cam_tint_amp",
                  "cam_contrast_amp"},
                 "dataset.synthetic");
      read(s, "num_ids", cfg.synthetic.num_ids);
      read(s, "images_per_id", cfg.synthetic.images_per_id);
      read(s, "num_cameras", cfg.synthetic.num_cameras);
      read(s, "image_height", cfg.synthetic.image_height);
      read(s, "image_width", cfg.synthetic.image_width);
      read(s, "seed", cfg.synthetic.seed);
      read(s, "test_ids", cfg.synthetic.test_ids);
      read(s, "query_per_id", cfg.synthetic.query_per_id);
      read(s, "translate_px", cfg.synthetic.translate_px);
      read(s, "color_jitter", cfg.synthetic.color_jitter);
      read(s, "noise_std", cfg.synthetic.noise_std);
      read(s, "cam_tint_amp", cfg.synthetic.cam_tint_amp);
      read(s, "cam_contrast_amp", cfg.synthetic.cam_contrast_amp);
    }
  }
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    check_keys(b, {"widths", "strides", "final_stage_stride"}, "backbone");
    read(b, "widths", cfg.backbone.widths);
    read(b, "strides", cfg.backbone.strides);
    read(b, "final_stage_stride", cfg.backbone.final_stage_stride);
  }
  if (j.contains("batch")) {
    const json& b = j.at("batch");
    check_keys(b, {"p", "k"}, "batch");
    read(b, "p", cfg.batch.identities_per_batch);
    read(b, "k", cfg.batch.images_per_identity);
  }
  if (j.contains("parts")) {
    const json& p = j.at("parts");
    check_keys(p, {"num_parts", "part_dim", "reduction"}, "parts");
    read(p, "num_parts", cfg.parts.num_parts);
    read(p, "part_dim", cfg.parts.part_dim);
    read(p, "reduction", cfg.parts.reduction);
  }
  if (j.contains("triplet")) {
    const json& t = j.at("triplet");
    check_keys(t, {"enabled", "margin", "metric", "target", "variant"}, "triplet");
    read(t, "enabled", cfg.triplet.enabled);
    read(t, "margin", cfg.triplet.margin);
    if (t.contains("metric")) cfg.triplet.metric = metric_from_name(t.at("metric"));
    if (t.contains("target")) {
      const std::string v = t.at("target");
      if (v == "projected_feature") cfg.triplet.target = TripletTarget::ProjectedFeature;
      else if (v == "raw_feature") cfg.triplet.target = TripletTarget::RawFeature;
      else throw ConfigError("config: triplet.target must be projected_feature or raw_feature");
    }
    if (t.contains("variant")) {
      const std::string v = t.at("variant");
      if (v == "batch_hard") cfg.triplet.variant = TripletVariant::BatchHard;
      else if (v == "batch_all") cfg.triplet.variant = TripletVariant::BatchAll;
      else throw ConfigError("config: triplet.variant must be batch_hard or batch_all");
    }
  }
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    check_keys(o,
               {"base_lr", "warmup_start_lr", "warmup_epochs", "decay_epochs",
                "decay_factor", "weight_decay", "total_epochs", "beta1", "beta2",
                "checkpoint_interval"},
               "optim");
    read(o, "base_lr", cfg.optim.base_lr);
    read(o, "warmup_start_lr", cfg.optim.warmup_start_lr);
    read(o, "warmup_epochs", cfg.optim.warmup_epochs);
    read(o, "decay_epochs", cfg.optim.decay_epochs);
    read(o, "decay_factor", cfg.optim.decay_factor);
    read(o, "weight_decay", cfg.optim.weight_decay);
    read(o, "total_epochs", cfg.optim.total_epochs);
    read(o, "beta1", cfg.optim.beta1);
    read(o, "beta2", cfg.optim.beta2);
    read(o, "checkpoint_interval", cfg.optim.checkpoint_interval);
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    check_keys(a,
               {"flip_prob", "pad_pixels", "crop", "erase_prob", "erase_area",
                "erase_aspect"},
               "augment");
    read(a, "flip_prob", cfg.augment.flip_prob);
    read(a, "pad_pixels", cfg.augment.pad_pixels);
    read(a, "crop", cfg.augment.crop);
    read(a, "erase_prob", cfg.augment.erase_prob);
    if (a.contains("erase_area")) {
      const auto range = a.at("erase_area").get<std::vector<float>>();
      if (range.size() != 2) throw ConfigError("config: erase_area must be [lo, hi]");
      cfg.augment.erase_area_lo = range[0];
      cfg.augment.erase_area_hi = range[1];
    }
    if (a.contains("erase_aspect")) {
      const auto range = a.at("erase_aspect").get<std::vector<float>>();
      if (range.size() != 2) throw ConfigError("config: erase_aspect must be [lo, hi]");
      cfg.augment.erase_aspect_lo = range[0];
      cfg.augment.erase_aspect_hi = range[1];
    }
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"feature_kind", "max_rank", "batch_size"}, "eval");
    if (e.contains("feature_kind"))
      cfg.eval_kind = feature_kind_from_name(e.at("feature_kind"));
    read(e, "max_rank", cfg.eval_max_rank);
    read(e, "batch_size", cfg.eval_batch_size);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  std::vector<std::string> violations;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) violations.push_back(msg);
  };
  require(epsilon >= 0.0 && epsilon < 1.0, "epsilon must lie in [0, 1)");
  require(triplet.margin >= 0.0, "triplet.margin must be >= 0");
  require(batch.identities_per_batch >= 2, "batch.p must be >= 2");
  require(batch.images_per_identity >= 2, "batch.k must be >= 2");
  require(dataset_type == "synthetic" || dataset_type == "folder" ||
              dataset_type == "manifest",
          "dataset.type must be synthetic, folder, or manifest");
  require(dataset_type == "synthetic" || !dataset_path.empty(),
          "dataset.path is required for folder/manifest datasets");
  require(eval_max_rank >= 1, "eval.max_rank must be >= 1");
  require(eval_batch_size >= 1, "eval.batch_size must be >= 1");
  if (model_kind == ModelKind::ProNet)
    require(eval_kind == FeatureKind::F || eval_kind == FeatureKind::FS,
            "eval.feature_kind f_tilde/f_tilde_s requires model pronetpp");
  try {
    backbone.validate();
  } catch (const std::exception& e) {
    violations.push_back(e.what());
  }
  if (model_kind == ModelKind::ProNetPP) {
    try {
      parts.validate();
      BackboneConfig bb = backbone;
      if (dataset_type == "synthetic") {
        bb.input_height = synthetic.image_height;
        bb.input_width = synthetic.image_width;
        const auto [h, w] = bb.output_dims();
        (void)w;
        require(parts.num_parts <= h,
                "parts.num_parts exceeds the feature map height");
      }
    } catch (const std::exception& e) {
      violations.push_back(e.what());
    }
  }
  try {
    optim.validate();
  } catch (const std::exception& e) {
    violations.push_back(e.what());
  }
  try {
    augment.validate();
  } catch (const std::exception& e) {
    violations.push_back(e.what());
  }
  if (dataset_type == "synthetic") {
    try {
      synthetic.validate();
    } catch (const std::exception& e) {
      violations.push_back(e.what());
    }
  }
  if (!violations.empty()) {
    std::ostringstream os;
    os << "invalid config (" << violations.size() << " violation(s)):";
    for (const auto& v : violations) os << "\n  - " << v;
    throw ConfigError(os.str());
  }
}

Dataset build_dataset(const RunConfig& cfg) {
  if (cfg.dataset_type == "synthetic") return generate_synthetic(cfg.synthetic);
  if (cfg.dataset_type == "folder") return load_image_folder(cfg.dataset_path);
  return load_csv_manifest(cfg.dataset_path);
}

Model build_model(const RunConfig& cfg, const Dataset& ds) {
  ModelConfig mc;
  mc.kind = cfg.model_kind;
  mc.backbone = cfg.backbone;
  if (!ds.records.empty()) {
    mc.backbone.input_height = ds.records.front().image.height;
    mc.backbone.input_width = ds.records.front().image.width;
  }
  mc.pooling = cfg.pooling;
  mc.parts = cfg.parts;
  mc.num_classes = ds.num_identities();
  return Model(mc, mix_seed(cfg.seed, 0x30DE1ull));
}

}  // namespace pronet
