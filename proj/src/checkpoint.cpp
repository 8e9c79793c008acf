#include "nkpcast/checkpoint.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace nkpcast::ckpt {

namespace {

constexpr char kMagic[4] = {'N', 'K', 'P', 'C'};

enum class Kind : std::uint32_t {
  Encoder = 1,
  Predictor = 2,
  RefDb = 3,
};

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof(v)); }
  void u64(std::uint64_t v) { raw(&v, sizeof(v)); }
  void i64(std::int64_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }

  std::string finish() const {
    std::string out(kMagic, sizeof(kMagic));
    out += body_;
    const std::uint32_t checksum = crc32(body_.data(), body_.size());
    out.append(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
    return out;
  }

 private:
  void raw(const void* data, std::size_t size) {
    body_.append(static_cast<const char*>(data), size);
  }
  std::string body_;
};

class Reader {
 public:
  explicit Reader(const std::string& blob) {
    if (blob.size() < sizeof(kMagic) + sizeof(std::uint32_t) ||
        std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
      fail(ErrorCode::CorruptFile, "checkpoint: bad magic or truncated file");
    }
    body_ = blob.substr(sizeof(kMagic), blob.size() - sizeof(kMagic) - 4);
    std::uint32_t stored;
    std::memcpy(&stored, blob.data() + blob.size() - 4, 4);
    if (stored != crc32(body_.data(), body_.size())) {
      fail(ErrorCode::CorruptFile, "checkpoint: checksum mismatch");
    }
  }

  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int64_t i64() { return get<std::int64_t>(); }
  double f64() { return get<double>(); }
  std::string str() {
    const std::uint32_t n = u32();
    check(n);
    std::string s(body_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    check(n * sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), body_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }

 private:
  template <typename T>
  T get() {
    check(sizeof(T));
    T v;
    std::memcpy(&v, body_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void check(std::size_t need) {
    if (pos_ + need > body_.size()) {
      fail(ErrorCode::CorruptFile, "checkpoint: truncated payload");
    }
  }
  std::string body_;
  std::size_t pos_ = 0;
};

void begin(Writer& w, Kind kind) {
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(kind));
}

void expect(Reader& r, Kind kind) {
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    fail(ErrorCode::VersionMismatch,
         "checkpoint: format version " + std::to_string(version));
  }
  const std::uint32_t got = r.u32();
  if (got != static_cast<std::uint32_t>(kind)) {
    fail(ErrorCode::ShapeMismatch,
         "checkpoint: wrong artifact kind " + std::to_string(got));
  }
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t size) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      }
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    crc = table[(crc ^ bytes[i]) & 0xFF] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      fail(ErrorCode::IoError, "cannot write " + tmp);
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
      fail(ErrorCode::IoError, "short write to " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    fail(ErrorCode::IoError, "cannot rename " + tmp + " to " + path);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::IoError, "cannot open " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_encoder(const std::string& path, const nkp::EncoderParams& params) {
  Writer w;
  begin(w, Kind::Encoder);
  w.u64(params.in_ch);
  w.u64(params.hidden);
  w.u64(params.emb);
  w.doubles(params.w);
  write_file_atomic(path, w.finish());
}

nkp::EncoderParams load_encoder(const std::string& path) {
  Reader r(read_file(path));
  expect(r, Kind::Encoder);
  nkp::EncoderParams params;
  params.in_ch = r.u64();
  params.hidden = r.u64();
  params.emb = r.u64();
  params.w = r.doubles();
  if (params.w.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "encoder checkpoint: shape/payload mismatch");
  }
  return params;
}

void save_predictor(const std::string& path,
                    const motion::PredictorParams& params) {
  Writer w;
  begin(w, Kind::Predictor);
  w.u64(params.context);
  w.u64(params.channels);
  w.u64(params.hidden);
  w.doubles(params.w);
  write_file_atomic(path, w.finish());
}

motion::PredictorParams load_predictor(const std::string& path) {
  Reader r(read_file(path));
  expect(r, Kind::Predictor);
  motion::PredictorParams params;
  params.context = r.u64();
  params.channels = r.u64();
  params.hidden = r.u64();
  params.w = r.doubles();
  if ((params.channels != 4 && params.channels != 6) ||
      params.w.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch,
         "predictor checkpoint: shape/payload mismatch");
  }
  return params;
}

void save_refdb(const std::string& path, const nkp::ReferenceDb& db) {
  Writer w;
  begin(w, Kind::RefDb);
  w.u64(db.dim);
  w.u64(db.label_coords.size());
  std::map<std::string, std::uint32_t> label_index;
  for (const auto& [label, center] : db.label_coords) {
    label_index[label] = static_cast<std::uint32_t>(label_index.size());
    w.str(label);
    w.f64(center.lat_deg);
    w.f64(center.lon_deg);
  }
  w.u64(db.entries.size());
  for (const auto& entry : db.entries) {
    w.u32(label_index.at(entry.label));
    w.i64(entry.mmsi);
    w.u64(entry.start_index);
    w.doubles(entry.embedding);
  }
  write_file_atomic(path, w.finish());
}

nkp::ReferenceDb load_refdb(const std::string& path) {
  Reader r(read_file(path));
  expect(r, Kind::RefDb);
  nkp::ReferenceDb db;
  db.dim = r.u64();
  const std::uint64_t n_labels = r.u64();
  std::vector<std::string> labels(n_labels);
  for (std::uint64_t i = 0; i < n_labels; ++i) {
    labels[i] = r.str();
    geo::GeoPoint center;
    center.lat_deg = r.f64();
    center.lon_deg = r.f64();
    db.label_coords[labels[i]] = center;
  }
  const std::uint64_t n_entries = r.u64();
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    nkp::DbEntry entry;
    const std::uint32_t li = r.u32();
    if (li >= labels.size()) {
      fail(ErrorCode::CorruptFile, "refdb checkpoint: bad label index");
    }
    entry.label = labels[li];
    entry.mmsi = r.i64();
    entry.start_index = r.u64();
    entry.embedding = r.doubles();
    if (entry.embedding.size() != db.dim) {
      fail(ErrorCode::ShapeMismatch, "refdb checkpoint: embedding dim mismatch");
    }
    db.entries.push_back(std::move(entry));
  }
  return db;
}

void save_normalization(const std::string& path,
                        const pipeline::NormalizationSpec& spec) {
  nlohmann::json j = {
      {"lat_min", spec.lat_min}, {"lat_max", spec.lat_max},
      {"lon_min", spec.lon_min}, {"lon_max", spec.lon_max},
      {"velocity_scale", spec.velocity_scale}, {"dt_s", spec.dt_s},
  };
  write_file_atomic(path, j.dump(2) + "\n");
}

pipeline::NormalizationSpec load_normalization(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const std::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("normalization spec: ") + e.what());
  }
  pipeline::NormalizationSpec spec;
  spec.lat_min = j.at("lat_min").get<double>();
  spec.lat_max = j.at("lat_max").get<double>();
  spec.lon_min = j.at("lon_min").get<double>();
  spec.lon_max = j.at("lon_max").get<double>();
  spec.velocity_scale = j.at("velocity_scale").get<double>();
  spec.dt_s = j.at("dt_s").get<double>();
  if (!(spec.lat_min < spec.lat_max) || !(spec.lon_min < spec.lon_max)) {
    fail(ErrorCode::InvalidConfig, "normalization spec: min >= max");
  }
  return spec;
}

}  // namespace nkpcast::ckpt
