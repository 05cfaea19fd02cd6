#include "pronet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

namespace fs = std::filesystem;

namespace pronet {

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    default: return "gallery";
  }
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "query") return Split::Query;
  if (s == "gallery") return Split::Gallery;
  throw DataError("unknown split name: " + s);
}

int Dataset::label_of(int record_index) const {
  const auto it = train_pid_to_label.find(records[record_index].pid);
  if (it == train_pid_to_label.end())
    throw DataError("record pid is not a training identity");
  return it->second;
}

void Dataset::rebuild_index() {
  train_indices.clear();
  query_indices.clear();
  gallery_indices.clear();
  train_pid_to_label.clear();
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    switch (records[i].split) {
      case Split::Train:
        train_indices.push_back(i);
        train_pid_to_label.emplace(records[i].pid, 0);
        break;
      case Split::Query: query_indices.push_back(i); break;
      case Split::Gallery: gallery_indices.push_back(i); break;
    }
  }
  int next = 0;
  for (auto& [pid, label] : train_pid_to_label) label = next++;
}

void BatchSpec::validate() const {
  if (identities_per_batch < 2 || images_per_identity < 2)
    throw ConfigError("batch spec requires P >= 2 and K >= 2");
}

void SyntheticConfig::validate() const {
  if (num_ids < 1 || images_per_id < 1 || num_cameras < 1)
    throw ConfigError("synthetic config: counts must be >= 1");
  if (image_height < 16 || image_width < 8)
    throw ConfigError("synthetic config: image dims must be >= 16x8");
  if (test_ids < 0 || test_ids > num_ids)
    throw ConfigError("synthetic config: test_ids out of range");
  if (test_ids > 0 && (query_per_id < 1 || query_per_id >= images_per_id))
    throw ConfigError("synthetic config: query_per_id must leave gallery images");
}

void AugmentConfig::validate() const {
  auto prob_ok = [](float p) { return p >= 0.0f && p <= 1.0f; };
  if (!prob_ok(flip_prob) || !prob_ok(erase_prob))
    throw ConfigError("augment config: probabilities must lie in [0,1]");
  if (pad_pixels < 0) throw ConfigError("augment config: pad_pixels must be >= 0");
  if (!(erase_area_lo > 0.0f && erase_area_lo <= erase_area_hi && erase_area_hi < 1.0f))
    throw ConfigError("augment config: need 0 < area_lo <= area_hi < 1");
  if (!(erase_aspect_lo > 0.0f && erase_aspect_lo <= erase_aspect_hi))
    throw ConfigError("augment config: bad aspect range");
}

// ---------------------------------------------------------------------------
// folder / manifest ingestion

namespace {

const std::regex kNameRe(R"(^(-?\d+)_c(\d+)_(\d+)\.(png|jpg|jpeg)$)",
                         std::regex::icase);

Image read_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("failed to read image: " + path);
  Image img;
  img.height = bgr.rows;
  img.width = bgr.cols;
  img.pixels.resize(static_cast<size_t>(bgr.rows) * bgr.cols * 3);
  for (int y = 0; y < bgr.rows; ++y)
    for (int x = 0; x < bgr.cols; ++x) {
      const cv::Vec3b px = bgr.at<cv::Vec3b>(y, x);
      img.at(y, x, 0) = px[2] / 255.0f;
      img.at(y, x, 1) = px[1] / 255.0f;
      img.at(y, x, 2) = px[0] / 255.0f;
    }
  return img;
}

void write_image(const Image& img, const std::string& path) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      auto to_u8 = [&](int c) {
        float v = std::clamp(img.at(y, x, c), 0.0f, 1.0f);
        return static_cast<unsigned char>(std::lround(v * 255.0f));
      };
      bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(to_u8(2), to_u8(1), to_u8(0));
    }
  if (!cv::imwrite(path, bgr)) throw IoError("failed to write image: " + path);
}

void ingest_dir(const fs::path& dir, Split split, Dataset& ds) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::smatch m;
    const std::string name = file.filename().string();
    if (!std::regex_match(name, m, kNameRe))
      throw DataError("cannot parse filename '" + name +
                      "': expected <pid>_c<camid>_<seq>.<ext>");
    ImageRecord rec;
    rec.pid = std::stoi(m[1]);
    rec.camid = std::stoi(m[2]);
    rec.seq = std::stoi(m[3]);
    rec.split = split;
    rec.image = read_image(file.string());
    ds.records.push_back(std::move(rec));
  }
}

}  // namespace

Dataset load_image_folder(const std::string& path) {
  const fs::path root(path);
  if (!fs::is_directory(root)) throw DataError("not a directory: " + path);
  Dataset ds;
  bool any_split_dir = false;
  for (Split split : {Split::Train, Split::Query, Split::Gallery}) {
    const fs::path sub = root / split_name(split);
    if (fs::is_directory(sub)) {
      any_split_dir = true;
      ingest_dir(sub, split, ds);
    }
  }
  if (!any_split_dir) ingest_dir(root, Split::Train, ds);
  if (ds.records.empty()) throw DataError("empty dataset: " + path);
  ds.rebuild_index();
  return ds;
}

Dataset load_csv_manifest(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open manifest: " + csv_path);
  const fs::path base = fs::path(csv_path).parent_path();
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest: " + csv_path);
  if (line != "path,pid,camid,split")
    throw DataError("manifest header must be 'path,pid,camid,split'");
  Dataset ds;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string path, pid, camid, split;
    if (!std::getline(ss, path, ',') || !std::getline(ss, pid, ',') ||
        !std::getline(ss, camid, ',') || !std::getline(ss, split))
      throw DataError("bad manifest line " + std::to_string(line_no));
    ImageRecord rec;
    rec.pid = std::stoi(pid);
    rec.camid = std::stoi(camid);
    rec.seq = line_no;
    rec.split = split_from_name(split);
    fs::path full = fs::path(path).is_absolute() ? fs::path(path) : base / path;
    rec.image = read_image(full.string());
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) throw DataError("empty dataset: " + csv_path);
  ds.rebuild_index();
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  const fs::path root(path);
  fs::create_directories(root);
  for (const auto& rec : ds.records) {
    const fs::path dir = root / split_name(rec.split);
    fs::create_directories(dir);
    std::ostringstream name;
    name << rec.pid << "_c" << rec.camid << "_" << rec.seq << ".png";
    write_image(rec.image, (dir / name.str()).string());
  }
}

// ---------------------------------------------------------------------------
// synthetic generation

float CameraTransform::apply(float value, int channel) const {
  return std::clamp(contrast * (value - 0.5f) + 0.5f + tint[channel], 0.0f, 1.0f);
}

CameraTransform camera_transform(const SyntheticConfig& cfg, int camid) {
  Rng rng(mix_seed(cfg.seed, 0xCA3Eull, static_cast<std::uint64_t>(camid)));
  CameraTransform t;
  for (int c = 0; c < 3; ++c)
    t.tint[c] = cfg.cam_tint_amp * static_cast<float>(2.0 * rng.uniform() - 1.0);
  t.contrast = 1.0f + cfg.cam_contrast_amp * static_cast<float>(2.0 * rng.uniform() - 1.0);
  return t;
}

namespace {

// A seeded layout of colored elliptical blobs on a colored background.
Image base_pattern(const SyntheticConfig& cfg, int id) {
  Rng rng(mix_seed(cfg.seed, 0x1Dull, static_cast<std::uint64_t>(id)));
  const int h = cfg.image_height, w = cfg.image_width;
  Image img;
  img.height = h;
  img.width = w;
  img.pixels.assign(static_cast<size_t>(h) * w * 3, 0.0f);
  float bg[3];
  for (auto& v : bg) v = static_cast<float>(0.2 + 0.4 * rng.uniform());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = bg[c];
  const int blobs = 4 + rng.uniform_int(4);
  for (int b = 0; b < blobs; ++b) {
    const double cy = rng.uniform(0.1, 0.9) * h;
    const double cx = rng.uniform(0.1, 0.9) * w;
    const double ry = rng.uniform(0.08, 0.25) * h;
    const double rx = rng.uniform(0.12, 0.35) * w;
    float color[3];
    for (auto& v : color) v = static_cast<float>(rng.uniform());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        if (dy * dy + dx * dx <= 1.0)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
      }
  }
  return img;
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Dataset ds;
  const int h = cfg.image_height, w = cfg.image_width;
  std::vector<CameraTransform> cams(cfg.num_cameras);
  for (int c = 0; c < cfg.num_cameras; ++c) cams[c] = camera_transform(cfg, c);
  for (int id = 0; id < cfg.num_ids; ++id) {
    const Image base = base_pattern(cfg, id);
    const bool is_test = id >= cfg.num_ids - cfg.test_ids;
    for (int k = 0; k < cfg.images_per_id; ++k) {
      Rng rng(mix_seed(cfg.seed, 0x13ull,
                       (static_cast<std::uint64_t>(id) << 24) |
                           static_cast<std::uint64_t>(k)));
      ImageRecord rec;
      rec.pid = id;
      rec.camid = k % cfg.num_cameras;  // round-robin over cameras
      rec.seq = k;
      rec.split = !is_test            ? Split::Train
                  : k < cfg.query_per_id ? Split::Query
                                         : Split::Gallery;
      rec.image.height = h;
      rec.image.width = w;
      rec.image.pixels.resize(static_cast<size_t>(h) * w * 3);
      const int t = static_cast<int>(cfg.translate_px);
      const int dy = t > 0 ? rng.uniform_int(2 * t + 1) - t : 0;
      const int dx = t > 0 ? rng.uniform_int(2 * t + 1) - t : 0;
      float gain[3];
      for (auto& g : gain)
        g = 1.0f + cfg.color_jitter * static_cast<float>(2.0 * rng.uniform() - 1.0);
      const CameraTransform& cam = cams[rec.camid];
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sy = std::clamp(y - dy, 0, h - 1);
          const int sx = std::clamp(x - dx, 0, w - 1);
          for (int c = 0; c < 3; ++c) {
            float v = base.at(sy, sx, c) * gain[c];
            v += cfg.noise_std * static_cast<float>(rng.normal());
            v = std::clamp(v, 0.0f, 1.0f);
            rec.image.at(y, x, c) = cam.apply(v, c);
          }
        }
      ds.records.push_back(std::move(rec));
    }
  }
  ds.rebuild_index();
  return ds;
}

// ---------------------------------------------------------------------------
// sampling & augmentation

Batch pk_sample(const Dataset& ds, const BatchSpec& spec, Rng& rng) {
  spec.validate();
  // group train records by dense label
  std::vector<std::vector<int>> by_label(ds.num_identities());
  for (int idx : ds.train_indices) by_label[ds.label_of(idx)].push_back(idx);
  const int num_ids = static_cast<int>(by_label.size());
  if (num_ids < spec.identities_per_batch)
    throw DataError("pk_sample: dataset has fewer than P identities");
  Batch batch;
  const auto chosen = rng.sample_without_replacement(num_ids, spec.identities_per_batch);
  for (int label : chosen) {
    const auto& pool = by_label[label];
    const int count = static_cast<int>(pool.size());
    if (count >= spec.images_per_identity) {
      const auto picks = rng.sample_without_replacement(count, spec.images_per_identity);
      for (int p : picks) {
        batch.record_indices.push_back(pool[p]);
        batch.labels.push_back(label);
      }
    } else {
      for (int k = 0; k < spec.images_per_identity; ++k) {
        batch.record_indices.push_back(pool[rng.uniform_int(count)]);
        batch.labels.push_back(label);
      }
    }
  }
  return batch;
}

ImageRecord augment(const ImageRecord& rec, const AugmentConfig& cfg, Rng& rng) {
  ImageRecord out = rec;
  Image& img = out.image;
  const int h = img.height, w = img.width;
  // horizontal flip
  if (rng.uniform() < cfg.flip_prob) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x)
        for (int c = 0; c < 3; ++c)
          std::swap(img.at(y, x, c), img.at(y, w - 1 - x, c));
  }
  // zero-pad then random crop back to the original size
  if (cfg.crop && cfg.pad_pixels > 0) {
    const int p = cfg.pad_pixels;
    const int oy = rng.uniform_int(2 * p + 1) - p;
    const int ox = rng.uniform_int(2 * p + 1) - p;
    Image cropped = img;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int sy = y + oy, sx = x + ox;
        const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
        for (int c = 0; c < 3; ++c)
          cropped.at(y, x, c) = inside ? img.at(sy, sx, c) : 0.0f;
      }
    img = std::move(cropped);
  }
  // random erasing with per-pixel uniform noise fill
  if (rng.uniform() < cfg.erase_prob) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double area = rng.uniform(cfg.erase_area_lo, cfg.erase_area_hi) * h * w;
      const double aspect = rng.uniform(cfg.erase_aspect_lo, cfg.erase_aspect_hi);
      const int eh = static_cast<int>(std::lround(std::sqrt(area * aspect)));
      const int ew = static_cast<int>(std::lround(std::sqrt(area / aspect)));
      if (eh < 1 || ew < 1 || eh > h || ew > w) continue;
      const double frac = static_cast<double>(eh) * ew / (h * w);
      if (frac < cfg.erase_area_lo || frac > cfg.erase_area_hi) continue;
      const int y0 = rng.uniform_int(h - eh + 1);
      const int x0 = rng.uniform_int(w - ew + 1);
      for (int y = y0; y < y0 + eh; ++y)
        for (int x = x0; x < x0 + ew; ++x)
          for (int c = 0; c < 3; ++c)
            img.at(y, x, c) = static_cast<float>(rng.uniform());
      break;
    }
  }
  return out;
}

}  // namespace pronet
