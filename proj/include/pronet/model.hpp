#ifndef PRONET_MODEL_HPP
#define PRONET_MODEL_HPP

#include <memory>
#include <string>
#include <vector>

#include "pronet/data.hpp"
#include "pronet/losses.hpp"
#include "pronet/mgf.hpp"
#include "pronet/nets.hpp"
#include "pronet/prototypes.hpp"

namespace pronet {

enum class ModelKind { ProNet, ProNetPP };
enum class FeatureKind { F, FS, FTilde, FTildeS };

std::string feature_kind_name(FeatureKind k);
FeatureKind feature_kind_from_name(const std::string& s);

struct PartConfig {
  int num_parts = 8;   // p
  int part_dim = 256;  // d'
  int reduction = 16;  // r of the MGF bottleneck
  void validate() const;
};

struct ModelConfig {
  ModelKind kind = ModelKind::ProNet;
  BackboneConfig backbone;
  Pooling pooling = Pooling::Gem;
  PartConfig parts;
  int num_classes = 0;  // N^p, set from the training identities
};

// Per-step loss components (all batch means).
struct LossBundle {
  double id = 0.0;
  double triplet = 0.0;
  std::vector<double> part_losses;
  double part_term = 0.0;  // (1/p) sum of part losses
  double id_m = 0.0;
  double triplet_m = 0.0;
  double total = 0.0;
  bool finite() const;
};

FeatureMap image_to_feature_map(const Image& img);

// ProNet / ProNet++ assembled: backbone, pooling, BNNeck, prototype banks,
// optional part branches and MGF. Owns all parameters.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  int feature_dim() const { return cfg_.backbone.output_channels(); }
  int fused_dim() const;
  ParamRefs params();

  // Forward + backward on one batch; gradients accumulate into the params.
  LossBundle train_step(const std::vector<const Image*>& images,
                        const std::vector<int>& labels,
                        const TripletConfig& triplet_cfg, double epsilon);

  // Forward-only loss evaluation (eval-mode statistics, no gradients).
  LossBundle eval_losses(const std::vector<const Image*>& images,
                         const std::vector<int>& labels,
                         const TripletConfig& triplet_cfg, double epsilon);

  // Eval-mode feature extraction, one row per image.
  MatF extract(const std::vector<const Image*>& images, FeatureKind kind);

  void zero_grads();

  PrototypeBank& global_bank() { return *global_bank_; }
  PrototypeBank& fused_bank();
  // the bank whose projection produces the given projected feature kind
  PrototypeBank& bank_for(FeatureKind kind);
  // the raw feature kind the given projected kind is computed from
  static FeatureKind raw_kind_for(FeatureKind kind);

  float gem_exponent_value() const { return global_pool_.exponent(); }

 private:
  LossBundle run_batch(const std::vector<const Image*>& images,
                       const std::vector<int>& labels,
                       const TripletConfig& triplet_cfg, double epsilon,
                       bool training, bool with_grads);

  ModelConfig cfg_;
  Backbone backbone_;
  PoolHead global_pool_;
  BatchNorm1d bnneck_;
  std::unique_ptr<PrototypeBank> global_bank_;
  // ProNet++ branches
  std::vector<PoolHead> part_pools_;
  std::vector<LinearNoBias> part_reduces_;
  std::vector<std::unique_ptr<PrototypeBank>> part_banks_;
  std::unique_ptr<Linear> mgf_fc1_;
  std::unique_ptr<Linear> mgf_fc2_;
  std::unique_ptr<BatchNorm1d> bnneck_m_;
  std::unique_ptr<PrototypeBank> fused_bank_;
};

}  // namespace pronet

#endif
