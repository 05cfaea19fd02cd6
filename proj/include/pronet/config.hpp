#ifndef PRONET_CONFIG_HPP
#define PRONET_CONFIG_HPP

#include <string>

#include <json.hpp>

#include "pronet/data.hpp"
#include "pronet/model.hpp"
#include "pronet/train.hpp"

namespace pronet {

// The whole experiment configuration, parsed from a single JSON document.
// Unknown keys are errors; validation reports every violated field at once.
struct RunConfig {
  ModelKind model_kind = ModelKind::ProNet;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::string out = "runs/default";
  double epsilon = 0.1;
  Pooling pooling = Pooling::Gem;

  std::string dataset_type = "synthetic";  // synthetic | folder | manifest
  std::string dataset_path;
  SyntheticConfig synthetic;

  BackboneConfig backbone;
  BatchSpec batch;
  PartConfig parts;
  TripletConfig triplet;
  OptimConfig optim;
  AugmentConfig augment;

  FeatureKind eval_kind = FeatureKind::FS;
  int eval_max_rank = 50;
  int eval_batch_size = 32;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load_file(const std::string& path);
  void validate() const;
};

std::string pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& s);
std::string metric_name(Metric m);
Metric metric_from_name(const std::string& s);

Dataset build_dataset(const RunConfig& cfg);
// builds the model with num_classes and backbone input size taken from the data
Model build_model(const RunConfig& cfg, const Dataset& ds);

}  // namespace pronet

#endif
