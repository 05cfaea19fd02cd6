#ifndef PRONET_TRAIN_HPP
#define PRONET_TRAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pronet/checkpoint.hpp"
#include "pronet/data.hpp"
#include "pronet/model.hpp"

namespace pronet {

struct OptimConfig {
  double base_lr = 3.5e-4;
  double warmup_start_lr = 3.5e-5;
  int warmup_epochs = 10;
  std::vector<int> decay_epochs{30, 60};
  double decay_factor = 0.1;
  double weight_decay = 5e-4;
  int total_epochs = 70;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int checkpoint_interval = 0;  // epochs between checkpoints; 0 = final only

  void validate() const;
};

// Warmup + step decay: linear from warmup_start_lr to base_lr over
// [0, warmup_epochs), then base_lr scaled by decay_factor per milestone.
double lr_at(int epoch, const OptimConfig& cfg);

class Adam {
 public:
  Adam(const OptimConfig& cfg, ParamRefs params);

  void step(double lr);
  long step_count() const { return step_count_; }
  void set_step_count(long t) { step_count_ = t; }
  const std::vector<VecF>& first_moments() const { return m_; }
  const std::vector<VecF>& second_moments() const { return v_; }
  std::vector<VecF>& first_moments() { return m_; }
  std::vector<VecF>& second_moments() { return v_; }

 private:
  OptimConfig cfg_;
  ParamRefs params_;
  std::vector<VecF> m_, v_;
  long step_count_ = 0;
};

struct LossRow {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBundle bundle;
};

std::string loss_csv_header();
std::string loss_csv_row(const LossRow& row);

struct TrainResult {
  std::vector<LossRow> log;
  int final_epoch = 0;
};

// Checkpoint <-> live state plumbing.
Container make_checkpoint(Model& model, const Adam& adam, int epoch,
                          std::uint64_t seed, const std::string& sampler_state,
                          const nlohmann::json& config_snapshot);
// Restores parameters and optimizer state; returns the stored epoch.
int apply_checkpoint(const Container& ckpt, Model& model, Adam& adam,
                     std::string* sampler_state = nullptr);

// Epoch driver: floor(N / (P*K)) PK batches per epoch, augmented inputs,
// Adam with the warmup/step schedule, CSV loss log, periodic checkpoints.
// start_epoch > 0 resumes a loaded state. run_dir may be empty (no files).
TrainResult train_model(Model& model, Adam& adam, const Dataset& ds,
                        const OptimConfig& ocfg, const BatchSpec& bspec,
                        const TripletConfig& tcfg, double epsilon,
                        const AugmentConfig& aug, const std::string& run_dir,
                        const nlohmann::json& config_snapshot,
                        int start_epoch = 0);

}  // namespace pronet

#endif
