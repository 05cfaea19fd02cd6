#include "pronet/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace pronet {

void OptimConfig::validate() const {
  if (warmup_start_lr > base_lr)
    throw ConfigError("optim: warmup_start_lr must be <= base_lr");
  if (!(decay_factor > 0.0 && decay_factor < 1.0))
    throw ConfigError("optim: decay_factor must lie in (0, 1)");
  if (warmup_epochs < 0 || total_epochs < 1)
    throw ConfigError("optim: bad epoch counts");
  if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be >= 0");
}

double lr_at(int epoch, const OptimConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.total_epochs)
    throw ConfigError("lr_at: epoch out of range");
  if (epoch < cfg.warmup_epochs) {
    const double t = static_cast<double>(epoch) / cfg.warmup_epochs;
    return cfg.warmup_start_lr + t * (cfg.base_lr - cfg.warmup_start_lr);
  }
  double lr = cfg.base_lr;
  for (int milestone : cfg.decay_epochs)
    if (epoch >= milestone) lr *= cfg.decay_factor;
  return lr;
}

Adam::Adam(const OptimConfig& cfg, ParamRefs params)
    : cfg_(cfg), params_(std::move(params)) {
  for (Param* p : params_) {
    m_.emplace_back(VecF::Zero(p->value.size()));
    v_.emplace_back(VecF::Zero(p->value.size()));
  }
}

void Adam::step(double lr) {
  ++step_count_;
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const float bias1 = 1.0f - std::pow(b1, static_cast<float>(step_count_));
  const float bias2 = 1.0f - std::pow(b2, static_cast<float>(step_count_));
  const float wd = static_cast<float>(cfg_.weight_decay);
  const float lrf = static_cast<float>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    if (!p->trainable) continue;
    VecF g = p->grad;
    if (p->decay && wd > 0.0f) g += wd * p->value;
    m_[i] = b1 * m_[i] + (1.0f - b1) * g;
    v_[i] = b2 * v_[i] + (1.0f - b2) * g.cwiseProduct(g);
    const VecF m_hat = m_[i] / bias1;
    const VecF v_hat = v_[i] / bias2;
    p->value -= lrf * (m_hat.array() / (v_hat.array().sqrt() + 1e-8f)).matrix();
  }
}

std::string loss_csv_header() {
  return "step,epoch,lr,L_id,L_tri,part_term,L_id_m,L_tri_m,total";
}

std::string loss_csv_row(const LossRow& row) {
  std::ostringstream os;
  os.precision(9);
  os << row.step << ',' << row.epoch << ',' << row.lr << ',' << row.bundle.id
     << ',' << row.bundle.triplet << ',' << row.bundle.part_term << ','
     << row.bundle.id_m << ',' << row.bundle.triplet_m << ','
     << row.bundle.total;
  return os.str();
}

Container make_checkpoint(Model& model, const Adam& adam, int epoch,
                          std::uint64_t seed, const std::string& sampler_state,
                          const nlohmann::json& config_snapshot) {
  Container c;
  c.meta["epoch"] = epoch;
  c.meta["seed"] = seed;
  c.meta["adam_step"] = adam.step_count();
  c.meta["sampler_state"] = sampler_state;
  c.meta["config"] = config_snapshot;
  const ParamRefs params = model.params();
  for (Param* p : params) {
    ArrayEntry a;
    a.name = p->name;
    a.shape = p->shape;
    a.f32 = p->value;
    c.arrays.push_back(std::move(a));
  }
  const auto& m = adam.first_moments();
  const auto& v = adam.second_moments();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ArrayEntry am{"adam.m." + params[i]->name, params[i]->shape, "float32", m[i], {}};
    ArrayEntry av{"adam.v." + params[i]->name, params[i]->shape, "float32", v[i], {}};
    c.arrays.push_back(std::move(am));
    c.arrays.push_back(std::move(av));
  }
  return c;
}

int apply_checkpoint(const Container& ckpt, Model& model, Adam& adam,
                     std::string* sampler_state) {
  const ParamRefs params = model.params();
  for (Param* p : params) {
    const ArrayEntry& a = ckpt.require(p->name);
    if (a.f32.size() != p->value.size())
      throw IoError("checkpoint array '" + p->name + "' has wrong size");
    p->value = a.f32;
  }
  auto& m = adam.first_moments();
  auto& v = adam.second_moments();
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = ckpt.require("adam.m." + params[i]->name).f32;
    v[i] = ckpt.require("adam.v." + params[i]->name).f32;
  }
  adam.set_step_count(ckpt.meta.at("adam_step").get<long>());
  if (sampler_state && ckpt.meta.contains("sampler_state"))
    *sampler_state = ckpt.meta.at("sampler_state").get<std::string>();
  return ckpt.meta.at("epoch").get<int>();
}

TrainResult train_model(Model& model, Adam& adam, const Dataset& ds,
                        const OptimConfig& ocfg, const BatchSpec& bspec,
                        const TripletConfig& tcfg, double epsilon,
                        const AugmentConfig& aug, const std::string& run_dir,
                        const nlohmann::json& config_snapshot, int start_epoch) {
  ocfg.validate();
  bspec.validate();
  aug.validate();
  if (ds.train_indices.empty()) throw DataError("train: dataset has no train split");
  const int per_batch = bspec.identities_per_batch * bspec.images_per_identity;
  const int batches_per_epoch =
      std::max(1, static_cast<int>(ds.train_indices.size()) / per_batch);

  std::ofstream csv;
  if (!run_dir.empty()) {
    fs::create_directories(run_dir);
    const bool fresh = start_epoch == 0;
    csv.open(fs::path(run_dir) / "losses.csv", fresh ? std::ios::out : std::ios::app);
    if (fresh) csv << loss_csv_header() << "\n";
  }

  TrainResult result;
  int step = start_epoch * batches_per_epoch;
  std::string sampler_state;
  for (int epoch = start_epoch; epoch < ocfg.total_epochs; ++epoch) {
    const double lr = lr_at(epoch, ocfg);
    Rng sampler(mix_seed(ocfg.seed, 0x5A3Dull, static_cast<std::uint64_t>(epoch)));
    for (int b = 0; b < batches_per_epoch; ++b, ++step) {
      const Batch batch = pk_sample(ds, bspec, sampler);
      std::vector<ImageRecord> augmented;
      augmented.reserve(batch.record_indices.size());
      std::vector<const Image*> images;
      for (std::size_t k = 0; k < batch.record_indices.size(); ++k) {
        // per-record stream so the batch is independent of worker scheduling
        Rng arng(mix_seed(ocfg.seed, 0xA27ull,
                          mix_seed(static_cast<std::uint64_t>(step), k)));
        augmented.push_back(augment(ds.records[batch.record_indices[k]], aug, arng));
      }
      for (const auto& rec : augmented) images.push_back(&rec.image);

      model.zero_grads();
      LossBundle bundle = model.train_step(images, batch.labels, tcfg, epsilon);
      if (!bundle.finite()) {
        std::ostringstream os;
        os << "non-finite loss at step " << step << " (epoch " << epoch
           << "); batch record indices:";
        for (int idx : batch.record_indices) os << ' ' << idx;
        throw std::runtime_error(os.str());
      }
      adam.step(lr);

      LossRow row{step, epoch, lr, bundle};
      result.log.push_back(row);
      if (csv.is_open()) csv << loss_csv_row(row) << "\n";
    }
    sampler_state = sampler.state();
    result.final_epoch = epoch + 1;
    const bool last = epoch + 1 == ocfg.total_epochs;
    const bool periodic =
        ocfg.checkpoint_interval > 0 && (epoch + 1) % ocfg.checkpoint_interval == 0;
    if (!run_dir.empty() && (last || periodic)) {
      Container ckpt = make_checkpoint(model, adam, epoch + 1, ocfg.seed,
                                       sampler_state, config_snapshot);
      save_container(ckpt, (fs::path(run_dir) / "checkpoint").string());
    }
  }
  return result;
}

}  // namespace pronet
