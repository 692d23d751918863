#include "rayzer/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "rayzer/config.hpp"

namespace rayzer::ckpt {

namespace {

constexpr char kMagic[8] = {'R', 'Z', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8),
                        (unsigned char)(v >> 16), (unsigned char)(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void put_f32_row(std::ostream& out, const float* v, size_t n) {
  // Little-endian host assumed for the fast path; byte-swap otherwise.
  static_assert(sizeof(float) == 4);
  uint32_t probe = 1;
  if (*reinterpret_cast<unsigned char*>(&probe) == 1) {
    out.write(reinterpret_cast<const char*>(v), std::streamsize(n * 4));
  } else {
    for (size_t i = 0; i < n; ++i) {
      uint32_t u;
      std::memcpy(&u, &v[i], 4);
      put_u32(out, u);
    }
  }
}

void get_f32_row(std::istream& in, float* v, size_t n) {
  uint32_t probe = 1;
  if (*reinterpret_cast<unsigned char*>(&probe) == 1) {
    in.read(reinterpret_cast<char*>(v), std::streamsize(n * 4));
  } else {
    for (size_t i = 0; i < n; ++i) {
      uint32_t u = get_u32(in);
      std::memcpy(&v[i], &u, 4);
    }
  }
}

void write_record(std::ostream& out, const std::string& name, const Tensor<float>& t) {
  put_u32(out, uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  put_u32(out, uint32_t(t.rows));
  put_u32(out, uint32_t(t.cols));
  put_f32_row(out, t.a.data(), t.a.size());
}

struct Record {
  std::string name;
  Tensor<float> data;
};

Record read_record(std::istream& in) {
  Record r;
  uint32_t len = get_u32(in);
  r.name.resize(len);
  in.read(r.name.data(), std::streamsize(len));
  uint32_t rows = get_u32(in), cols = get_u32(in);
  r.data = Tensor<float>(int(rows), int(cols));
  get_f32_row(in, r.data.a.data(), r.data.a.size());
  return r;
}

}  // namespace

void save(const std::string& path, const model::ModelConfig& cfg,
          nn::Weights<float>& weights, int iter, const OptState* opt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);

  cfg::json header;
  header["format_version"] = kFormatVersion;
  header["model"] = cfg::model_config_to_json(cfg);
  header["iter"] = iter;
  header["adam_t"] = opt ? opt->adam_t : 0;
  header["has_opt"] = opt != nullptr;
  const std::string hs = header.dump();

  out.write(kMagic, 8);
  put_u32(out, uint32_t(hs.size()));
  out.write(hs.data(), std::streamsize(hs.size()));

  uint32_t n_records =
      uint32_t(weights.all().size()) + (opt ? uint32_t(2 * weights.all().size()) : 0);
  put_u32(out, n_records);
  for (auto& p : weights.all()) write_record(out, p->name, p->values);
  if (opt) {
    for (auto& p : weights.all()) write_record(out, "_opt.m." + p->name, opt->m.at(p->name));
    for (auto& p : weights.all()) write_record(out, "_opt.v." + p->name, opt->v.at(p->name));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Loaded load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a rayzer checkpoint: " + path);

  uint32_t hlen = get_u32(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  cfg::json header = cfg::json::parse(hs);
  if (header.at("format_version").get<uint32_t>() != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);

  Loaded out;
  out.cfg = cfg::model_config_from_json(header.at("model"));
  out.iter = header.at("iter").get<int>();
  out.has_opt = header.value("has_opt", false);
  out.opt.adam_t = header.value("adam_t", 0);
  out.weights = model::build_structure<float>(out.cfg);

  uint32_t n = get_u32(in);
  size_t filled = 0;
  for (uint32_t i = 0; i < n; ++i) {
    Record r = read_record(in);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    if (r.name.rfind("_opt.m.", 0) == 0) {
      out.opt.m[r.name.substr(7)] = std::move(r.data);
    } else if (r.name.rfind("_opt.v.", 0) == 0) {
      out.opt.v[r.name.substr(7)] = std::move(r.data);
    } else {
      if (!out.weights.has(r.name))
        throw std::runtime_error("checkpoint parameter " + r.name +
                                 " does not exist in the target model");
      auto& p = out.weights.get(r.name);
      if (p.values.rows != r.data.rows || p.values.cols != r.data.cols)
        throw std::runtime_error(
            "checkpoint shape mismatch for " + r.name + ": file " +
            std::to_string(r.data.rows) + "x" + std::to_string(r.data.cols) +
            " vs model " + std::to_string(p.values.rows) + "x" +
            std::to_string(p.values.cols));
      p.values = std::move(r.data);
      ++filled;
    }
  }
  if (filled != out.weights.all().size())
    throw std::runtime_error("checkpoint is missing parameters: " + path);
  return out;
}

}  // namespace rayzer::ckpt
