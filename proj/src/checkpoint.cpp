// SPDX-License-Identifier: Apache-2.0
#include "mona/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace mona {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'N', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kFormatF64 = 0;
constexpr std::uint8_t kFormatBf16 = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(std::string_view s, bool wide) {
    if (wide) {
      u64(s.size());
    } else {
      u32(static_cast<std::uint32_t>(s.size()));
    }
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text(bool wide) {
    const std::uint64_t n = wide ? u64() : u32();
    need(n, "string");
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view bytes(std::size_t n) {
    need(n, "header");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  void need(std::uint64_t n, const char* what) const {
    if (n > in_.size() - pos_) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
  }

 private:
  std::uint64_t le(int bytes) {
    need(static_cast<std::uint64_t>(bytes), "integer");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += bytes;
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

struct NamedMatrix {
  const char* name;
  Matrix ParamState::*field;
};

struct NamedBf16 {
  const char* name;
  std::vector<Bf16> ParamState::*field;
};

constexpr NamedMatrix kMatrixBuffers[] = {
    {"momentum", &ParamState::momentum}, {"accel", &ParamState::accel},
    {"prev_grad", &ParamState::prev_grad}, {"grad_slot", &ParamState::grad_slot},
    {"adam_m", &ParamState::adam_m},     {"adam_v", &ParamState::adam_v},
};

constexpr NamedBf16 kBf16Buffers[] = {
    {"accel_bf16", &ParamState::accel_bf16},
    {"grad_slot_bf16", &ParamState::grad_slot_bf16},
};

void write_matrix(Writer& w, std::string_view name, const Matrix& m) {
  w.text(name, false);
  w.u8(kFormatF64);
  w.u64(m.rows());
  w.u64(m.cols());
  for (double v : m.values()) w.f64(v);
}

}  // namespace

std::string encode_checkpoint(std::string_view config_text, std::span<const ParamGroup> groups) {
  Writer w;
  w.raw(std::string_view(kMagic, sizeof kMagic));
  w.u32(kCheckpointVersion);
  w.text(config_text, true);
  w.u32(static_cast<std::uint32_t>(groups.size()));
  for (const ParamGroup& g : groups) {
    w.text(g.name, false);
    w.u8(g.kind == ParamKind::matrix ? 0 : 1);
    w.u64(g.state.step);

    std::uint32_t count = 1;
    for (const auto& b : kMatrixBuffers) count += (g.state.*b.field).empty() ? 0 : 1;
    for (const auto& b : kBf16Buffers) count += (g.state.*b.field).empty() ? 0 : 1;
    w.u32(count);

    write_matrix(w, "weights", g.weights);
    for (const auto& b : kMatrixBuffers) {
      const Matrix& m = g.state.*b.field;
      if (!m.empty()) write_matrix(w, b.name, m);
    }
    for (const auto& b : kBf16Buffers) {
      const auto& v = g.state.*b.field;
      if (v.empty()) continue;
      w.text(b.name, false);
      w.u8(kFormatBf16);
      w.u64(g.weights.rows());
      w.u64(g.weights.cols());
      for (Bf16 x : v) w.u16(x.bits);
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw CheckpointError("not a checkpoint (bad magic bytes)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_text = r.text(true);
  const std::uint32_t ngroups = r.u32();
  for (std::uint32_t gi = 0; gi < ngroups; ++gi) {
    ParamGroup g;
    g.name = r.text(false);
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw CheckpointError("group '" + g.name + "': bad kind tag");
    g.kind = kind == 0 ? ParamKind::matrix : ParamKind::vector;
    g.state.step = r.u64();
    const std::uint32_t nbuf = r.u32();
    for (std::uint32_t bi = 0; bi < nbuf; ++bi) {
      const std::string name = r.text(false);
      const std::uint8_t format = r.u8();
      const std::uint64_t rows = r.u64();
      const std::uint64_t cols = r.u64();
      if (rows != 0 && cols > std::numeric_limits<std::uint64_t>::max() / rows) {
        throw CheckpointError("buffer '" + name + "': shape overflows");
      }
      const std::uint64_t n = rows * cols;
      if (n > (std::uint64_t{1} << 56)) throw CheckpointError("buffer '" + name + "': too large");
      const std::string where = "'" + g.name + "/" + name + "'";
      if (format == kFormatF64) {
        r.need(n * 8, "f64 payload");
        Matrix m(rows, cols);
        for (std::uint64_t i = 0; i < n; ++i) m[i] = r.f64();
        if (name == "weights") {
          g.weights = std::move(m);
          continue;
        }
        bool found = false;
        for (const auto& b : kMatrixBuffers) {
          if (name == b.name) {
            g.state.*b.field = std::move(m);
            found = true;
            break;
          }
        }
        if (!found) throw CheckpointError("unknown f64 buffer " + where);
      } else if (format == kFormatBf16) {
        r.need(n * 2, "bf16 payload");
        std::vector<Bf16> v(n);
        for (std::uint64_t i = 0; i < n; ++i) v[i].bits = r.u16();
        bool found = false;
        for (const auto& b : kBf16Buffers) {
          if (name == b.name) {
            g.state.*b.field = std::move(v);
            found = true;
            break;
          }
        }
        if (!found) throw CheckpointError("unknown bf16 buffer " + where);
      } else {
        throw CheckpointError("buffer " + where + ": bad format tag");
      }
    }
    if (g.weights.empty()) throw CheckpointError("group '" + g.name + "' has no weights");
    ckpt.groups.push_back(std::move(g));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after last group");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, std::string_view config_text,
                     std::span<const ParamGroup> groups) {
  const std::string bytes = encode_checkpoint(config_text, groups);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::string describe_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream os;
  os << "groups: " << ckpt.groups.size() << "\n";
  auto line = [&](const ParamGroup& g, std::string_view buf, std::string_view fmt, double norm) {
    char num[32];
    std::snprintf(num, sizeof num, "%.6e", norm);
    os << g.name << "/" << buf << "  " << fmt << "  " << g.weights.shape_string() << "  norm "
       << num << "\n";
  };
  for (const ParamGroup& g : ckpt.groups) {
    os << g.name << "  kind " << to_string(g.kind) << "  step " << g.state.step << "\n";
    line(g, "weights", "f64", frobenius_norm(g.weights));
    for (const auto& b : kMatrixBuffers) {
      const Matrix& m = g.state.*b.field;
      if (!m.empty()) line(g, b.name, "f64", frobenius_norm(m));
    }
    for (const auto& b : kBf16Buffers) {
      const auto& v = g.state.*b.field;
      if (v.empty()) continue;
      double sq = 0.0;
      for (Bf16 x : v) {
        const double d = bf16_decode(x);
        sq += d * d;
      }
      line(g, b.name, "bf16", std::sqrt(sq));
    }
  }
  return os.str();
}

}  // namespace mona
