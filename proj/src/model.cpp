#include "pronet/model.hpp"

#include <cmath>

namespace pronet {

std::string feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::F: return "f";
    case FeatureKind::FS: return "f_s";
    case FeatureKind::FTilde: return "f_tilde";
    default: return "f_tilde_s";
  }
}

FeatureKind feature_kind_from_name(const std::string& s) {
  if (s == "f") return FeatureKind::F;
  if (s == "f_s") return FeatureKind::FS;
  if (s == "f_tilde") return FeatureKind::FTilde;
  if (s == "f_tilde_s") return FeatureKind::FTildeS;
  throw ConfigError("unknown feature kind: " + s);
}

void PartConfig::validate() const {
  if (num_parts < 1) throw ConfigError("parts: num_parts must be >= 1");
  if (part_dim < 1) throw ConfigError("parts: part_dim must be >= 1");
  if (reduction < 1) throw ConfigError("parts: reduction must be >= 1");
}

bool LossBundle::finite() const {
  auto ok = [](double v) { return std::isfinite(v); };
  for (double v : part_losses)
    if (!ok(v)) return false;
  return ok(id) && ok(triplet) && ok(part_term) && ok(id_m) && ok(triplet_m) &&
         ok(total);
}

FeatureMap image_to_feature_map(const Image& img) {
  FeatureMap fm;
  fm.height = img.height;
  fm.width = img.width;
  fm.values.resize(img.height * img.width, 3);
  for (int p = 0; p < img.height * img.width; ++p)
    for (int c = 0; c < 3; ++c) fm.values(p, c) = img.pixels[p * 3 + c];
  return fm;
}

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg),
      global_pool_("pool.global", cfg.pooling),
      bnneck_("bnneck", cfg.backbone.output_channels()) {
  Rng rng(init_seed);
  backbone_ = Backbone(cfg_.backbone, rng);
  const int d = cfg_.backbone.output_channels();
  if (cfg_.num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  global_bank_ = std::make_unique<PrototypeBank>("bank.global", cfg_.num_classes, d, rng);
  if (cfg_.kind == ModelKind::ProNetPP) {
    cfg_.parts.validate();
    const auto [h, w] = cfg_.backbone.output_dims();
    (void)w;
    if (cfg_.parts.num_parts > h)
      throw ConfigError("parts: num_parts exceeds feature map height");
    const int p = cfg_.parts.num_parts;
    const int dp = cfg_.parts.part_dim;
    for (int j = 0; j < p; ++j) {
      part_pools_.emplace_back("pool.part" + std::to_string(j), cfg_.pooling);
      part_reduces_.emplace_back("reduce.part" + std::to_string(j), d, dp, rng);
      part_banks_.push_back(std::make_unique<PrototypeBank>(
          "bank.part" + std::to_string(j), cfg_.num_classes, dp, rng));
    }
    const int fused = d + p * dp;
    const int hidden = std::max(1, fused / cfg_.parts.reduction);
    mgf_fc1_ = std::make_unique<Linear>("mgf.fc1", fused, hidden, rng);
    mgf_fc2_ = std::make_unique<Linear>("mgf.fc2", hidden, fused, rng);
    bnneck_m_ = std::make_unique<BatchNorm1d>("bnneck_m", fused);
    fused_bank_ = std::make_unique<PrototypeBank>("bank.fused", cfg_.num_classes, fused, rng);
  }
}

int Model::fused_dim() const {
  return feature_dim() + cfg_.parts.num_parts * cfg_.parts.part_dim;
}

ParamRefs Model::params() {
  ParamRefs out;
  backbone_.collect(out);
  global_pool_.collect(out);
  bnneck_.collect(out);
  global_bank_->collect(out);
  for (auto& p : part_pools_) p.collect(out);
  for (auto& r : part_reduces_) r.collect(out);
  for (auto& b : part_banks_) b->collect(out);
  if (mgf_fc1_) mgf_fc1_->collect(out);
  if (mgf_fc2_) mgf_fc2_->collect(out);
  if (bnneck_m_) bnneck_m_->collect(out);
  if (fused_bank_) fused_bank_->collect(out);
  return out;
}

void Model::zero_grads() {
  for (Param* p : params()) p->grad.setZero();
}

PrototypeBank& Model::fused_bank() {
  if (!fused_bank_) throw ConfigError("model has no fused prototype bank");
  return *fused_bank_;
}

PrototypeBank& Model::bank_for(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::FS: return *global_bank_;
    case FeatureKind::FTildeS: return fused_bank();
    default: throw ConfigError("feature kind has no prototype bank");
  }
}

FeatureKind Model::raw_kind_for(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::FS: return FeatureKind::F;
    case FeatureKind::FTildeS: return FeatureKind::FTilde;
    default: return kind;
  }
}

LossBundle Model::train_step(const std::vector<const Image*>& images,
                             const std::vector<int>& labels,
                             const TripletConfig& triplet_cfg, double epsilon) {
  return run_batch(images, labels, triplet_cfg, epsilon, true, true);
}

LossBundle Model::eval_losses(const std::vector<const Image*>& images,
                              const std::vector<int>& labels,
                              const TripletConfig& triplet_cfg, double epsilon) {
  return run_batch(images, labels, triplet_cfg, epsilon, false, false);
}

LossBundle Model::run_batch(const std::vector<const Image*>& images,
                            const std::vector<int>& labels,
                            const TripletConfig& triplet_cfg, double epsilon,
                            bool training, bool with_grads) {
  const int batch = static_cast<int>(images.size());
  if (batch != static_cast<int>(labels.size()))
    throw ShapeError("train_step: images/labels mismatch");
  const int d = feature_dim();
  const float eps_f = static_cast<float>(epsilon);
  const float margin = static_cast<float>(triplet_cfg.margin);

  // backbone + global pooling
  std::vector<BackboneCache> bb_caches(with_grads ? batch : 0);
  std::vector<PoolCache> pool_caches(with_grads ? batch : 0);
  std::vector<FeatureMap> maps(batch);
  MatF pooled(batch, d);
  for (int i = 0; i < batch; ++i) {
    maps[i] = backbone_.forward(image_to_feature_map(*images[i]),
                                with_grads ? &bb_caches[i] : nullptr);
    pooled.row(i) = global_pool_
                        .forward(maps[i].values, with_grads ? &pool_caches[i] : nullptr)
                        .transpose();
  }
  BnCache bn_cache;
  MatF f = bnneck_.forward(pooled, training, with_grads ? &bn_cache : nullptr);
  MatF fs = global_bank_->project_batch(f);

  LossBundle bundle;
  MatF d_fs, d_tri;
  bundle.id = id_loss<float>(fs, labels, eps_f, with_grads ? &d_fs : nullptr);
  const bool proj_target = triplet_cfg.target == TripletTarget::ProjectedFeature;
  if (triplet_cfg.enabled) {
    bundle.triplet = triplet_loss<float>(proj_target ? fs : f, labels, margin,
                                         triplet_cfg.metric, triplet_cfg.variant,
                                         with_grads ? &d_tri : nullptr);
  }
  bundle.total = bundle.id + bundle.triplet;

  // ProNet++ branches
  const int p = cfg_.kind == ModelKind::ProNetPP ? cfg_.parts.num_parts : 0;
  std::vector<Stripe> stripes;
  std::vector<std::vector<PoolCache>> part_pool_caches(p);
  std::vector<MatF> part_pooled(p), part_reduced(p), d_part_logits(p);
  MatF fbar, f_tilde, ft_bn, fts, d_fts, d_tri_m;
  MgfCache<float> mgf_cache;
  BnCache bnm_cache;
  if (p > 0) {
    const int dp = cfg_.parts.part_dim;
    stripes = partition_parts(maps[0].height, p);
    for (int j = 0; j < p; ++j) {
      part_pool_caches[j].resize(with_grads ? batch : 0);
      part_pooled[j].resize(batch, d);
      for (int i = 0; i < batch; ++i) {
        const MatF block = stripe_block(maps[i], stripes[j]);
        part_pooled[j].row(i) =
            part_pools_[j]
                .forward(block, with_grads ? &part_pool_caches[j][i] : nullptr)
                .transpose();
      }
      part_reduced[j] = part_reduces_[j].forward(part_pooled[j]);
      MatF logits = part_banks_[j]->project_batch(part_reduced[j]);
      bundle.part_losses.push_back(id_loss<float>(
          logits, labels, eps_f, with_grads ? &d_part_logits[j] : nullptr));
      // the classifier branch gradient enters via the bank below
      if (with_grads) {
        // scaled by 1/p per the overall objective
        d_part_logits[j] *= 1.0f / static_cast<float>(p);
      }
      bundle.part_term += bundle.part_losses.back() / p;
      (void)dp;
    }
    fbar.resize(batch, fused_dim());
    fbar.leftCols(d) = f;
    for (int j = 0; j < p; ++j)
      fbar.middleCols(d + j * cfg_.parts.part_dim, cfg_.parts.part_dim) =
          part_reduced[j];
    f_tilde = mgf_forward<float>(fbar, mgf_fc1_->weight(), mgf_fc1_->bias(),
                                 mgf_fc2_->weight(), mgf_fc2_->bias(),
                                 with_grads ? &mgf_cache : nullptr);
    ft_bn = bnneck_m_->forward(f_tilde, training, with_grads ? &bnm_cache : nullptr);
    fts = fused_bank_->project_batch(ft_bn);
    bundle.id_m = id_loss<float>(fts, labels, eps_f, with_grads ? &d_fts : nullptr);
    if (triplet_cfg.enabled) {
      bundle.triplet_m = triplet_loss<float>(
          proj_target ? fts : ft_bn, labels, margin, triplet_cfg.metric,
          triplet_cfg.variant, with_grads ? &d_tri_m : nullptr);
    }
    bundle.total += bundle.part_term + bundle.id_m + bundle.triplet_m;
  }

  if (!with_grads) return bundle;

  // ---- backward ----
  MatF d_f = MatF::Zero(batch, d);
  {
    MatF d_fs_total = d_fs;
    if (triplet_cfg.enabled && proj_target) d_fs_total += d_tri;
    d_f += global_bank_->backward(f, d_fs_total);
    if (triplet_cfg.enabled && !proj_target) d_f += d_tri;
  }
  std::vector<MatF> d_maps(batch);
  for (int i = 0; i < batch; ++i)
    d_maps[i] = MatF::Zero(maps[i].values.rows(), maps[i].values.cols());

  if (p > 0) {
    MatF d_fts_total = d_fts;
    if (triplet_cfg.enabled && proj_target) d_fts_total += d_tri_m;
    MatF d_ft_bn = fused_bank_->backward(ft_bn, d_fts_total);
    if (triplet_cfg.enabled && !proj_target) d_ft_bn += d_tri_m;
    MatF d_f_tilde = bnneck_m_->backward(bnm_cache, d_ft_bn);
    MgfGrads<float> mg = mgf_backward<float>(mgf_cache, mgf_fc1_->weight(),
                                             mgf_fc2_->weight(), d_f_tilde);
    mgf_fc1_->weight_param().gmat() += mg.d_w1;
    mgf_fc1_->bias_param().grad += mg.d_b1;
    mgf_fc2_->weight_param().gmat() += mg.d_w2;
    mgf_fc2_->bias_param().grad += mg.d_b2;
    d_f += mg.d_fbar.leftCols(d);
    for (int j = 0; j < p; ++j) {
      const int dp = cfg_.parts.part_dim;
      MatF d_reduced = mg.d_fbar.middleCols(d + j * dp, dp);
      d_reduced += part_banks_[j]->backward(part_reduced[j], d_part_logits[j]);
      MatF d_pooled_j = part_reduces_[j].backward(part_pooled[j], d_reduced);
      for (int i = 0; i < batch; ++i) {
        MatF d_block = part_pools_[j].backward(part_pool_caches[j][i],
                                               d_pooled_j.row(i).transpose());
        d_maps[i].middleRows(stripes[j].row_begin * maps[i].width,
                             stripes[j].rows * maps[i].width) += d_block;
      }
    }
  }

  MatF d_pooled = bnneck_.backward(bn_cache, d_f);
  for (int i = 0; i < batch; ++i) {
    d_maps[i] += global_pool_.backward(pool_caches[i], d_pooled.row(i).transpose());
    backbone_.backward(bb_caches[i], d_maps[i]);
  }
  return bundle;
}

MatF Model::extract(const std::vector<const Image*>& images, FeatureKind kind) {
  if ((kind == FeatureKind::FTilde || kind == FeatureKind::FTildeS) &&
      cfg_.kind != ModelKind::ProNetPP)
    throw ConfigError("feature kind '" + feature_kind_name(kind) +
                      "' requires a ProNet++ model");
  const int batch = static_cast<int>(images.size());
  const int d = feature_dim();
  MatF pooled(batch, d);
  std::vector<FeatureMap> maps(batch);
  for (int i = 0; i < batch; ++i) {
    maps[i] = backbone_.forward(image_to_feature_map(*images[i]), nullptr);
    pooled.row(i) = global_pool_.forward(maps[i].values, nullptr).transpose();
  }
  MatF f = bnneck_.forward(pooled, false, nullptr);
  if (kind == FeatureKind::F) return f;
  if (kind == FeatureKind::FS) return global_bank_->project_batch(f);
  // fused kinds
  const int p = cfg_.parts.num_parts;
  const int dp = cfg_.parts.part_dim;
  const auto stripes = partition_parts(maps[0].height, p);
  MatF fbar(batch, fused_dim());
  fbar.leftCols(d) = f;
  for (int j = 0; j < p; ++j) {
    MatF pooled_j(batch, d);
    for (int i = 0; i < batch; ++i)
      pooled_j.row(i) =
          part_pools_[j].forward(stripe_block(maps[i], stripes[j]), nullptr).transpose();
    fbar.middleCols(d + j * dp, dp) = part_reduces_[j].forward(pooled_j);
  }
  MatF f_tilde = mgf_forward<float>(fbar, mgf_fc1_->weight(), mgf_fc1_->bias(),
                                    mgf_fc2_->weight(), mgf_fc2_->bias(), nullptr);
  MatF ft_bn = bnneck_m_->forward(f_tilde, false, nullptr);
  if (kind == FeatureKind::FTilde) return ft_bn;
  return fused_bank_->project_batch(ft_bn);
}

}  // namespace pronet
