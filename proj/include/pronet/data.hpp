#ifndef PRONET_DATA_HPP
#define PRONET_DATA_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pronet/common.hpp"
#include "pronet/rng.hpp"

namespace pronet {

enum class Split { Train, Query, Gallery };

std::string split_name(Split s);
Split split_from_name(const std::string& s);

struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major H x W x 3, RGB, values in [0,1]

  float& at(int y, int x, int c) { return pixels[(y * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(y * width + x) * 3 + c]; }
};

struct ImageRecord {
  int pid = 0;    // identity label; -1 marks gallery distractors
  int camid = 0;  // camera label
  int seq = 0;    // per-identity sequence number
  Split split = Split::Train;
  Image image;
};

struct Dataset {
  std::vector<ImageRecord> records;
  std::vector<int> train_indices;
  std::vector<int> query_indices;
  std::vector<int> gallery_indices;
  std::map<int, int> train_pid_to_label;  // dense 0..num_identities-1

  int num_images() const { return static_cast<int>(records.size()); }
  int num_identities() const { return static_cast<int>(train_pid_to_label.size()); }
  int label_of(int record_index) const;
  void rebuild_index();
};

struct BatchSpec {
  int identities_per_batch = 8;  // P
  int images_per_identity = 8;   // K
  void validate() const;
};

struct Batch {
  std::vector<int> record_indices;  // size P*K
  std::vector<int> labels;          // dense train labels, aligned
};

struct SyntheticConfig {
  int num_ids = 8;
  int images_per_id = 8;
  int num_cameras = 2;
  int image_height = 64;
  int image_width = 32;
  std::uint64_t seed = 0;
  int test_ids = 0;       // this many trailing identities go to query/gallery
  int query_per_id = 2;   // leading images of each test identity become queries
  float translate_px = 3.0f;
  float color_jitter = 0.1f;
  float noise_std = 0.05f;
  float cam_tint_amp = 0.25f;
  float cam_contrast_amp = 0.3f;
  void validate() const;
};

// Deterministic per-camera color transform used by the synthetic generator:
// out = clamp(contrast * (in - 0.5) + 0.5 + tint[channel]).
struct CameraTransform {
  float contrast = 1.0f;
  float tint[3] = {0.0f, 0.0f, 0.0f};
  float apply(float value, int channel) const;
};

CameraTransform camera_transform(const SyntheticConfig& cfg, int camid);

struct AugmentConfig {
  float flip_prob = 0.5f;
  int pad_pixels = 10;
  bool crop = true;
  float erase_prob = 0.5f;
  float erase_area_lo = 0.02f;
  float erase_area_hi = 0.4f;
  float erase_aspect_lo = 0.3f;
  float erase_aspect_hi = 3.33f;
  void validate() const;
};

// Ingest an image folder. Filenames must match <pid>_c<camid>_<seq>.<ext>;
// splits come from train/ query/ gallery/ subdirectories when present,
// otherwise every file is a train record.
Dataset load_image_folder(const std::string& path);

// CSV manifest alternative: header "path,pid,camid,split"; paths relative to
// the manifest's directory.
Dataset load_csv_manifest(const std::string& csv_path);

Dataset generate_synthetic(const SyntheticConfig& cfg);

// Write a dataset to disk in the folder layout load_image_folder reads.
void save_dataset(const Dataset& ds, const std::string& path);

// PK sampling: P identities uniformly without replacement, K images each
// (with replacement only when the identity has fewer than K images).
Batch pk_sample(const Dataset& ds, const BatchSpec& spec, Rng& rng);

ImageRecord augment(const ImageRecord& rec, const AugmentConfig& cfg, Rng& rng);

}  // namespace pronet

#endif
