// Copyright 2026 The MACO Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "maco/cli_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json_codec.hpp"

namespace maco {

namespace fs = std::filesystem;
using json_codec::Json;

// ---- run configuration ----

void RunConfig::validate() const {
  if (dataset.kind == DatasetSource::Kind::kDirectory && dataset.directory.empty()) {
    fail(ErrorKind::kConfig, "dataset.path", "a directory dataset needs a path");
  }
  if (dataset.kind == DatasetSource::Kind::kSynthetic && (dataset.synth_classes < 1 || dataset.synth_per_class < 1)) {
    fail(ErrorKind::kConfig, "dataset", "synthetic class and image counts must be positive");
  }
  if (split_counts.train < 0 || split_counts.val < 0 || split_counts.test < 0) {
    fail(ErrorKind::kConfig, "splits.counts", "must be non-negative");
  }
  if (test_episodes < 1) fail(ErrorKind::kConfig, "test_episodes", "must be at least 1");
  model.validate();
  augment.validate();
  schedule.validate();
}

namespace {

Json to_json(const RunConfig& c) {
  Json dataset;
  if (c.dataset.kind == DatasetSource::Kind::kSynthetic) {
    dataset = Json{{"type", "synthetic"},
                   {"classes", c.dataset.synth_classes},
                   {"per_class", c.dataset.synth_per_class},
                   {"seed", c.dataset.synth_seed}};
  } else {
    dataset = Json{{"type", "directory"}, {"path", c.dataset.directory.string()}};
  }
  Json splits{{"counts", Json::array({c.split_counts.train, c.split_counts.val, c.split_counts.test})},
              {"seed", c.split_seed}};
  if (c.manifest) splits["manifest"] = c.manifest->string();
  Json model = json_codec::to_json(c.model);
  model.erase("ways");
  model.erase("shots");
  return Json{{"dataset", std::move(dataset)},
              {"splits", std::move(splits)},
              {"ways", c.model.ways},
              {"shots", c.model.shots},
              {"model", std::move(model)},
              {"augment", json_codec::to_json(c.augment)},
              {"schedule", json_codec::to_json(c.schedule)},
              {"test_episodes", c.test_episodes},
              {"output_dir", c.output_dir.string()},
              {"seed", c.seed}};
}

RunConfig from_json(const Json& j) {
  RunConfig c;
  json_codec::reject_unknown(j, "config", {"dataset", "splits", "ways", "shots", "model", "augment", "schedule",
                                           "test_episodes", "output_dir", "seed"});
  if (auto it = j.find("dataset"); it != j.end()) {
    const Json& d = *it;
    std::string type = "synthetic";
    json_codec::read(d, "dataset", "type", type);
    if (type == "synthetic") {
      json_codec::reject_unknown(d, "dataset", {"type", "classes", "per_class", "seed"});
      c.dataset.kind = DatasetSource::Kind::kSynthetic;
      json_codec::read(d, "dataset", "classes", c.dataset.synth_classes);
      json_codec::read(d, "dataset", "per_class", c.dataset.synth_per_class);
      json_codec::read(d, "dataset", "seed", c.dataset.synth_seed);
    } else if (type == "directory") {
      json_codec::reject_unknown(d, "dataset", {"type", "path"});
      c.dataset.kind = DatasetSource::Kind::kDirectory;
      std::string path;
      json_codec::read(d, "dataset", "path", path);
      c.dataset.directory = path;
    } else {
      fail(ErrorKind::kConfig, "dataset.type", "expected \"synthetic\" or \"directory\", got \"" + type + "\"");
    }
  }
  if (auto it = j.find("splits"); it != j.end()) {
    json_codec::reject_unknown(*it, "splits", {"counts", "seed", "manifest"});
    if (auto counts = it->find("counts"); counts != it->end()) {
      if (!counts->is_array() || counts->size() != 3) fail(ErrorKind::kConfig, "splits.counts", "expected [train, val, test]");
      c.split_counts = SplitCounts{(*counts)[0].get<int>(), (*counts)[1].get<int>(), (*counts)[2].get<int>()};
    }
    json_codec::read(*it, "splits", "seed", c.split_seed);
    if (auto m = it->find("manifest"); m != it->end()) c.manifest = fs::path(m->get<std::string>());
  }
  if (auto it = j.find("model"); it != j.end()) {
    if (it->contains("ways") || it->contains("shots")) {
      fail(ErrorKind::kConfig, "model", "set ways and shots at the top level");
    }
    json_codec::from_json(*it, c.model);
  }
  json_codec::read(j, "config", "ways", c.model.ways);
  json_codec::read(j, "config", "shots", c.model.shots);
  if (auto it = j.find("augment"); it != j.end()) json_codec::from_json(*it, c.augment);
  if (auto it = j.find("schedule"); it != j.end()) json_codec::from_json(*it, c.schedule);
  json_codec::read(j, "config", "test_episodes", c.test_episodes);
  if (auto it = j.find("output_dir"); it != j.end()) c.output_dir = it->get<std::string>();
  json_codec::read(j, "config", "seed", c.seed);
  c.validate();
  return c;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, path.string(), "cannot open for writing");
  out << text;
  if (!out) fail(ErrorKind::kIo, path.string(), "write failed");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "config", e.what());
  }
  try {
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, "config", e.what());
  }
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_file(path)); }

std::string dump_run_config(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

// ---- image codecs ----

namespace {

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegError*>(info->err);
  (*info->err->format_message)(info, err->message);
  std::longjmp(err->jump, 1);
}

RgbImage decode_jpeg(const std::string& bytes, const fs::path& path) {
  jpeg_decompress_struct info{};
  JpegError err{};
  info.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  std::vector<unsigned char> raw;
  int width = 0, height = 0, comps = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&info);
    fail(ErrorKind::kFormat, path.string(), std::string("JPEG: ") + err.message);
  }
  jpeg_create_decompress(&info);
  jpeg_mem_src(&info, reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&info, TRUE);
  if (info.jpeg_color_space != JCS_GRAYSCALE) info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  width = static_cast<int>(info.output_width);
  height = static_cast<int>(info.output_height);
  comps = info.output_components;
  raw.resize(static_cast<std::size_t>(width) * height * comps);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = raw.data() + static_cast<std::size_t>(info.output_scanline) * width * comps;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);

  RgbImage img{height, width, std::vector<float>(static_cast<std::size_t>(width) * height * 3)};
  for (std::size_t p = 0; p < static_cast<std::size_t>(width) * height; ++p)
    for (int k = 0; k < 3; ++k) img.pixels[p * 3 + k] = raw[p * comps + (comps == 1 ? 0 : k)] / 255.0f;
  return img;
}

RgbImage decode_png(const std::string& bytes, const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ErrorKind::kFormat, path.string(), std::string("PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;  // expands palette and grey, strips alpha (composited on black)
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::kFormat, path.string(), "PNG: " + msg);
  }
  RgbImage img{static_cast<int>(image.height), static_cast<int>(image.width), std::vector<float>(raw.size())};
  for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0f;
  return img;
}

}  // namespace

RgbImage decode_image(const fs::path& path) {
  const std::string bytes = read_file(path);
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() >= 8 && png_sig_cmp(b, 0, 8) == 0) return decode_png(bytes, path);
  if (bytes.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF) return decode_jpeg(bytes, path);
  fail(ErrorKind::kFormat, path.string(), "not a PNG or JPEG file");
}

void write_png(const fs::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(2) != 3) fail(ErrorKind::kShape, "write_png", "expected [H,W,3]");
  std::vector<unsigned char> raw(image.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(image.data()[i], 0.0f, 1.0f) * 255.0f));
  }
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(image.dim(1));
  out.height = static_cast<png_uint_32>(image.dim(0));
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.string().c_str(), 0, raw.data(), 0, nullptr)) {
    fail(ErrorKind::kIo, path.string(), std::string("PNG write: ") + out.message);
  }
}

std::vector<float> resize_bilinear(std::span<const float> src, int h, int w, int c, int out_h, int out_w) {
  if (h < 1 || w < 1 || c < 1 || out_h < 1 || out_w < 1) fail(ErrorKind::kShape, "resize", "extents must be positive");
  if (src.size() != static_cast<std::size_t>(h) * w * c) fail(ErrorKind::kShape, "resize", "buffer size mismatch");
  struct Tap {
    int lo, hi;
    float t;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> v(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      const double s = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int lo = static_cast<int>(std::floor(s));
      v[static_cast<std::size_t>(o)] = Tap{lo, std::min(lo + 1, in - 1), static_cast<float>(s - lo)};
    }
    return v;
  };
  const auto ty = taps(h, out_h), tx = taps(w, out_w);
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w * c);
  for (int y = 0; y < out_h; ++y) {
    const Tap& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      const Tap& b = tx[static_cast<std::size_t>(x)];
      for (int k = 0; k < c; ++k) {
        auto at = [&](int yy, int xx) { return src[(static_cast<std::size_t>(yy) * w + xx) * c + k]; };
        const float top = at(a.lo, b.lo) + b.t * (at(a.lo, b.hi) - at(a.lo, b.lo));
        const float bottom = at(a.hi, b.lo) + b.t * (at(a.hi, b.hi) - at(a.hi, b.lo));
        out[(static_cast<std::size_t>(y) * out_w + x) * c + k] = top + a.t * (bottom - top);
      }
    }
  }
  return out;
}

IngestReport ingest_dataset(const fs::path& root, int image_size, std::ostream* warnings) {
  if (image_size < 1) fail(ErrorKind::kConfig, "ingest", "image_size must be positive");
  std::error_code ec;
  if (!fs::is_directory(root, ec)) fail(ErrorKind::kIo, root.string(), "not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (class_dirs.empty()) fail(ErrorKind::kEmpty, root.string(), "no class subdirectories");

  IngestReport report;
  report.data.image_size = image_size;
  report.data.channels = 3;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    auto& bucket = report.data.images.emplace_back();
    for (const auto& file : files) {
      RgbImage img;
      try {
        img = decode_image(file);
      } catch (const Error& e) {
        ++report.skipped;
        report.skipped_files.push_back(file.string());
        if (warnings) *warnings << "warning: skipping " << file.string() << ": " << e.what() << "\n";
        continue;
      }
      auto px = resize_bilinear(img.pixels, img.height, img.width, 3, image_size, image_size);
      bucket.emplace_back(Shape{image_size, image_size, 3}, px);
    }
    if (bucket.empty()) fail(ErrorKind::kEmpty, dir.string(), "class has no decodable images");
    report.data.class_names.push_back(dir.filename().string());
  }
  if (warnings && report.skipped > 0) *warnings << "warning: skipped " << report.skipped << " undecodable file(s)\n";
  return report;
}

// ---- split manifests ----

void write_split_manifest(const fs::path& path, const ClassSplits& splits, const std::vector<std::string>& names) {
  std::vector<std::pair<std::string, std::string>> lines;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    for (int c : splits.classes(s)) {
      if (c < 0 || static_cast<std::size_t>(c) >= names.size()) fail(ErrorKind::kRange, "manifest", "class id out of range");
      lines.emplace_back(names[static_cast<std::size_t>(c)], split_name(s));
    }
  }
  std::sort(lines.begin(), lines.end());
  std::string text;
  for (const auto& [name, split] : lines) text += name + "," + split + "\n";
  write_file(path, text);
}

ClassSplits read_split_manifest(const fs::path& path, const std::vector<std::string>& names) {
  std::map<std::string, int> id;
  for (std::size_t i = 0; i < names.size(); ++i) id[names[i]] = static_cast<int>(i);
  std::istringstream in(read_file(path));
  ClassSplits out;
  std::vector<bool> seen(names.size(), false);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (comma == std::string::npos) fail(ErrorKind::kFormat, where, "expected class_id,split");
    const std::string name = line.substr(0, comma);
    const auto it = id.find(name);
    if (it == id.end()) fail(ErrorKind::kData, where, "unknown class '" + name + "'");
    if (seen[static_cast<std::size_t>(it->second)]) fail(ErrorKind::kData, where, "class '" + name + "' listed twice");
    seen[static_cast<std::size_t>(it->second)] = true;
    Split s;
    try {
      s = parse_split(line.substr(comma + 1));
    } catch (const Error& e) {
      fail(ErrorKind::kFormat, where, e.what());
    }
    (s == Split::kTrain ? out.train : s == Split::kVal ? out.val : out.test).push_back(it->second);
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!seen[i]) fail(ErrorKind::kData, path.string(), "class '" + names[i] + "' is not assigned a split");
  }
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

// ---- metrics ----

std::string format_metrics_csv(const std::vector<MetricsRecord>& history) {
  std::ostringstream out;
  out << "epoch,split,loss,accuracy,episodes\n" << std::fixed << std::setprecision(6);
  for (const auto& r : history) {
    out << r.epoch << ',' << split_name(r.split) << ',' << r.loss << ',' << r.accuracy << ',' << r.episodes << '\n';
  }
  return out.str();
}

void emit_metrics_csv(const std::vector<MetricsRecord>& history, const fs::path& path) {
  write_file(path, format_metrics_csv(history));
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,split,loss,accuracy,episodes") {
    fail(ErrorKind::kFormat, "metrics csv", "missing header");
  }
  std::vector<MetricsRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) fail(ErrorKind::kFormat, "metrics csv:" + std::to_string(line_no), "expected 5 fields");
    try {
      MetricsRecord r;
      r.epoch = std::stoi(f[0]);
      r.split = parse_split(f[1]);
      r.loss = std::stod(f[2]);
      r.accuracy = std::stod(f[3]);
      r.episodes = std::stoll(f[4]);
      r.correct = std::llround(r.accuracy * static_cast<double>(r.episodes));
      out.push_back(r);
    } catch (const std::logic_error&) {
      fail(ErrorKind::kFormat, "metrics csv:" + std::to_string(line_no), "bad number");
    }
  }
  return out;
}

double binomial_half_width(double accuracy, std::int64_t episodes) {
  if (episodes < 1) fail(ErrorKind::kRange, "binomial_half_width", "needs at least one episode");
  return 1.96 * std::sqrt(accuracy * (1.0 - accuracy) / static_cast<double>(episodes));
}

std::string format_accuracy_table(const std::vector<AccuracyRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "variant" << std::setw(20) << "1-shot" << std::setw(20) << "5-shot"
      << "episodes\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    std::ostringstream one, five;
    one << std::fixed << std::setprecision(2) << 100 * r.one_shot << " +/- " << 100 * r.one_shot_half_width;
    five << std::fixed << std::setprecision(2) << 100 * r.five_shot << " +/- " << 100 * r.five_shot_half_width;
    out << std::setw(12) << r.variant << std::setw(20) << one.str() << std::setw(20) << five.str() << r.episodes << "\n";
  }
  return out.str();
}

std::string format_accuracy_csv(const std::vector<AccuracyRow>& rows) {
  std::ostringstream out;
  out << "variant,one_shot,one_shot_half_width,five_shot,five_shot_half_width,episodes\n"
      << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.variant << ',' << r.one_shot << ',' << r.one_shot_half_width << ',' << r.five_shot << ','
        << r.five_shot_half_width << ',' << r.episodes << '\n';
  }
  return out.str();
}

// ---- commands ----

PreparedData prepare_data(const RunConfig& config, std::ostream* warnings) {
  PreparedData out;
  if (config.dataset.kind == DatasetSource::Kind::kSynthetic) {
    out.data = synth_dataset_generate(config.dataset.synth_classes, config.dataset.synth_per_class,
                                      config.model.image_size, config.dataset.synth_seed);
  } else {
    out.data = ingest_dataset(config.dataset.directory, config.model.image_size, warnings).data;
  }
  if (config.manifest) {
    out.splits = read_split_manifest(*config.manifest, out.data.class_names);
    out.splits.seed = config.split_seed;
  } else {
    std::vector<int> ids(static_cast<std::size_t>(out.data.num_classes()));
    std::iota(ids.begin(), ids.end(), 0);
    out.splits = build_class_splits(ids, config.split_counts, config.split_seed);
  }
  return out;
}

TrainingRun run_train(const RunConfig& config, std::ostream& log, const std::function<bool(const FitResult&)>& keep_going) {
  config.validate();
  PreparedData prepared = prepare_data(config, &log);
  fs::create_directories(config.output_dir);
  const SeedRecord seeds{config.seed, config.split_seed,
                         config.dataset.kind == DatasetSource::Kind::kSynthetic ? config.dataset.synth_seed : 0};
  log << "training " << (config.model.conditioning_enabled ? "maco" : "no-cond") << " " << config.model.ways << "-way "
      << config.model.shots << "-shot on " << prepared.splits.train.size() << " train / " << prepared.splits.val.size()
      << " val classes, " << config.schedule.epochs << " x " << config.schedule.episodes_per_epoch << " episodes\n";
  TrainingRun run = fit(config.model, prepared.data, prepared.splits, config.augment, config.schedule, seeds,
                        [&](const FitResult& r) {
                          const auto& tr = r.history[r.history.size() - 2];
                          const auto& va = r.history.back();
                          log << std::fixed << std::setprecision(4) << "epoch " << va.epoch << ": train loss "
                              << tr.loss << " acc " << tr.accuracy << ", val loss " << va.loss << " acc "
                              << va.accuracy << "\n";
                          log.flush();
                          return !keep_going || keep_going(r);
                        });
  run.best.run_config = to_json(config).dump();
  save_checkpoint(run.best, config.output_dir / "best.ckpt");
  emit_metrics_csv(run.result.history, config.output_dir / "metrics.csv");
  write_file(config.output_dir / "config.json", dump_run_config(config));
  log << "best epoch " << run.result.best_epoch << " (val acc " << run.result.best_val_accuracy << "), wrote "
      << (config.output_dir / "best.ckpt").string() << "\n";
  return run;
}

AccuracyRow run_eval(const Checkpoint& checkpoint, std::int64_t episodes, std::uint64_t seed, std::ostream* warnings) {
  if (checkpoint.run_config.empty()) fail(ErrorKind::kConfig, "eval", "checkpoint does not record its dataset");
  if (episodes < 1) fail(ErrorKind::kConfig, "eval", "episodes must be at least 1");
  const RunConfig config = parse_run_config(checkpoint.run_config);
  PreparedData prepared = prepare_data(config, warnings);
  MacoNet<float> model(checkpoint.config, checkpoint.params.clone());
  AccuracyRow row;
  row.variant = checkpoint.config.conditioning_enabled ? "maco" : "no-cond";
  row.episodes = episodes;
  for (int shots : {1, 5}) {
    EpisodeSampler sampler(prepared.data, prepared.splits.test, Split::kTest, checkpoint.config.ways, shots,
                           checkpoint.augment, Rng::mix(seed ^ static_cast<std::uint64_t>(shots)));
    const MetricsRecord rec = evaluate(model, sampler, episodes);
    (shots == 1 ? row.one_shot : row.five_shot) = rec.accuracy;
    (shots == 1 ? row.one_shot_half_width : row.five_shot_half_width) = binomial_half_width(rec.accuracy, episodes);
  }
  return row;
}

}  // namespace maco
