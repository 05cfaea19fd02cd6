// Small shared setups for the model / training / eval tests.
#ifndef PRONET_TESTS_FIXTURES_HPP
#define PRONET_TESTS_FIXTURES_HPP

#include "pronet/config.hpp"
#include "pronet/data.hpp"
#include "pronet/model.hpp"

namespace fixtures {

inline pronet::SyntheticConfig tiny_data_cfg() {
  pronet::SyntheticConfig cfg;
  cfg.num_ids = 6;
  cfg.images_per_id = 6;
  cfg.num_cameras = 2;
  cfg.image_height = 32;
  cfg.image_width = 16;
  cfg.seed = 7;
  cfg.test_ids = 2;
  cfg.query_per_id = 2;
  return cfg;
}

inline pronet::ModelConfig tiny_model_cfg(pronet::ModelKind kind,
                                          int num_classes = 4) {
  pronet::ModelConfig mc;
  mc.kind = kind;
  mc.backbone.widths = {8, 16};
  mc.backbone.strides = {2, 2};
  mc.backbone.final_stage_stride = 1;
  mc.backbone.input_height = 32;
  mc.backbone.input_width = 16;
  mc.pooling = pronet::Pooling::Gem;
  mc.parts.num_parts = 4;
  mc.parts.part_dim = 8;
  mc.parts.reduction = 4;
  mc.num_classes = num_classes;
  return mc;
}

inline std::vector<const pronet::Image*> batch_images(const pronet::Dataset& ds,
                                                      const std::vector<int>& idx) {
  std::vector<const pronet::Image*> out;
  for (int i : idx) out.push_back(&ds.records[i].image);
  return out;
}

}  // namespace fixtures

#endif
