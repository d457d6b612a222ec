#include "havt/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "havt/rng.hpp"

namespace havt {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "tensor blobs are stored little-endian; add byte swapping for this host");

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& where) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError(where + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::map<std::string, std::string> read_key_values(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError(file.string() + ": expected key=value, got '" + line + "'");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace

void write_tensor(const FloatTensor& t, const fs::path& blob, const fs::path& shape_file) {
  std::ostringstream desc;
  desc << "dtype=float32\nshape=";
  for (size_t i = 0; i < t.rank(); ++i) desc << (i ? "," : "") << t.dim(i);
  desc << '\n';
  write_text(shape_file, desc.str());

  std::ofstream out(blob, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + blob.string());
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!out) throw IoError("write failed for " + blob.string());
}

FloatTensor read_tensor(const fs::path& blob, const fs::path& shape_file) {
  const auto kv = read_key_values(shape_file);
  const auto dtype = kv.find("dtype");
  if (dtype == kv.end() || dtype->second != "float32") {
    throw IoError(shape_file.string() + ": dtype must be float32");
  }
  const auto shape_it = kv.find("shape");
  if (shape_it == kv.end()) throw IoError(shape_file.string() + ": missing shape");
  std::vector<int64_t> shape;
  std::stringstream ss(shape_it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const double d = parse_double(trim(tok), shape_file.string());
    if (d < 0 || d != std::floor(d)) throw IoError(shape_file.string() + ": bad dimension");
    shape.push_back(static_cast<int64_t>(d));
  }
  const int64_t n = FloatTensor::count(shape);
  std::ifstream in(blob, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + blob.string());
  const auto bytes = static_cast<int64_t>(in.tellg());
  if (bytes != n * static_cast<int64_t>(sizeof(float))) {
    throw IoError(blob.string() + ": holds " + std::to_string(bytes) + " bytes, shape " +
                  shape_to_string(shape) + " needs " + std::to_string(n * 4));
  }
  in.seekg(0);
  std::vector<float> data(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (!in) throw IoError("read failed for " + blob.string());
  return FloatTensor(std::move(shape), std::move(data));
}

void write_boxes(const std::vector<GroundTruthBox>& boxes, const fs::path& file) {
  std::string text;
  for (const auto& b : boxes) {
    text += std::to_string(static_cast<int>(b.cls)) + ' ' + format_double(b.box.cx) + ' ' +
            format_double(b.box.cy) + ' ' + format_double(b.box.w) + ' ' +
            format_double(b.box.h) + '\n';
  }
  write_text(file, text);
}

std::vector<GroundTruthBox> read_boxes(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<GroundTruthBox> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    for (std::string f; ls >> f;) fields.push_back(f);
    const std::string where = file.string() + ":" + std::to_string(lineno);
    if (fields.size() != 5) throw IoError(where + ": expected 'cls cx cy w h'");
    const double cls = parse_double(fields[0], where);
    if (cls != std::floor(cls)) throw IoError(where + ": class must be an integer");
    GroundTruthBox g;
    g.cls = state_from_index(static_cast<int>(cls));
    g.box = {parse_double(fields[1], where), parse_double(fields[2], where),
             parse_double(fields[3], where), parse_double(fields[4], where)};
    boxes.push_back(g);
  }
  return boxes;
}

void write_sample(const Sample& sample, const fs::path& dir) {
  validate_sample(sample);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  write_tensor(sample.clip.frames, dir / "video.f32", dir / "video.shape");
  write_tensor(sample.audio.samples, dir / "audio.f32", dir / "audio.shape");
  write_boxes(sample.boxes, dir / "boxes.txt");

  SceneMeta meta = sample.scene_meta;
  meta["frame_rate"] = format_double(sample.clip.frame_rate);
  meta["sample_rate"] = format_double(sample.audio.sample_rate);
  if (!meta.contains("seed")) meta["seed"] = "unknown";
  std::string text;
  for (const auto& [k, v] : meta) text += k + '=' + v + '\n';
  write_text(dir / "meta.txt", text);
}

Sample read_sample(const fs::path& dir) {
  Sample s;
  s.clip.frames = read_tensor(dir / "video.f32", dir / "video.shape");
  s.audio.samples = read_tensor(dir / "audio.f32", dir / "audio.shape");
  s.boxes = read_boxes(dir / "boxes.txt");
  s.scene_meta = read_key_values(dir / "meta.txt");
  const auto get = [&](const std::string& key) {
    const auto it = s.scene_meta.find(key);
    if (it == s.scene_meta.end()) throw IoError((dir / "meta.txt").string() + ": missing " + key);
    return parse_double(it->second, (dir / "meta.txt").string());
  };
  s.clip.frame_rate = get("frame_rate");
  s.audio.sample_rate = get("sample_rate");
  s.scene_meta.erase("frame_rate");
  s.scene_meta.erase("sample_rate");
  validate_sample(s);
  return s;
}

std::vector<std::string> list_samples(const fs::path& split_dir) {
  if (!fs::is_directory(split_dir)) throw IoError("not a directory: " + split_dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(split_dir)) {
    if (e.is_directory() && fs::exists(e.path() / "boxes.txt")) {
      ids.push_back(e.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Split split_dataset(size_t n, std::array<double, 3> ratios, uint64_t seed) {
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be nonnegative");
  }
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1 (got " + format_double(sum) + ")");
  }
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mix_seed(seed, 0x5117ull));
  rng.shuffle(idx);

  const auto n_train = static_cast<size_t>(std::floor(ratios[0] * double(n) + 1e-9));
  const auto n_val = std::min(n - n_train,
                              static_cast<size_t>(std::floor(ratios[1] * double(n) + 1e-9)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

std::string split_hash(const std::vector<size_t>& indices) {
  std::vector<size_t> sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t v : sorted) h = splitmix64(h ^ static_cast<uint64_t>(v));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace havt
