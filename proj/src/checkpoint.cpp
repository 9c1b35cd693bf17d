#include "flowood/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "flowood/errors.hpp"

namespace flowood {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes a little-endian host");

constexpr std::array<char, 8> kMagic = {'F', 'L', 'O', 'W', 'O', 'O', 'D', 'M'};
constexpr std::uint32_t kKindFlow = 1;
constexpr std::uint32_t kKindOcSvm = 2;

std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof(v)); }
  void u64(std::uint64_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }
  void f64_block(const std::vector<double>& v) { raw(v.data(), v.size() * sizeof(double)); }
  void bytes(const std::vector<std::uint8_t>& v) { raw(v.data(), v.size()); }

  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t n, std::string path)
      : data_(data), size_(n), path_(std::move(path)) {}

  std::uint32_t u32() { return read<std::uint32_t>(); }
  std::uint64_t u64() { return read<std::uint64_t>(); }
  double f64() { return read<double>(); }

  void f64_block(std::vector<double>& out, std::size_t count) {
    need(count * sizeof(double));
    out.resize(count);
    std::memcpy(out.data(), data_ + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
  }

  void bytes(std::vector<std::uint8_t>& out, std::size_t count) {
    need(count);
    out.assign(data_ + pos_, data_ + pos_ + count);
    pos_ += count;
  }

  bool exhausted() const { return pos_ == size_; }

 private:
  template <typename T>
  T read() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) {
    if (pos_ + n > size_) throw data_error(path_ + ": checkpoint truncated");
  }
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string path_;
};

void write_dense_net(Writer& w, const DenseNet& net) {
  w.u64(net.layers.size());
  for (const auto& layer : net.layers) {
    w.u64(layer.in_dim);
    w.u64(layer.out_dim);
    w.u32(static_cast<std::uint32_t>(layer.activation));
    w.f64_block(layer.weights);
    w.f64_block(layer.bias);
  }
}

DenseNet read_dense_net(Reader& r, const std::string& path) {
  DenseNet net;
  const std::uint64_t n_layers = r.u64();
  if (n_layers == 0 || n_layers > 1024) throw data_error(path + ": implausible dense layer count");
  net.layers.resize(n_layers);
  for (auto& layer : net.layers) {
    layer.in_dim = r.u64();
    layer.out_dim = r.u64();
    if (layer.in_dim == 0 || layer.out_dim == 0 || layer.in_dim > (1u << 20) ||
        layer.out_dim > (1u << 20))
      throw data_error(path + ": implausible dense layer shape");
    const std::uint32_t act = r.u32();
    if (act > 2) throw data_error(path + ": unknown activation tag");
    layer.activation = static_cast<Activation>(act);
    r.f64_block(layer.weights, layer.in_dim * layer.out_dim);
    r.f64_block(layer.bias, layer.out_dim);
  }
  return net;
}

void write_container(const std::string& path, std::uint32_t kind,
                     const std::vector<unsigned char>& payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("cannot write checkpoint file: " + path);
  out.write(kMagic.data(), kMagic.size());
  std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&kind), sizeof(kind));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  const std::uint32_t crc = crc32(payload.data(), payload.size());
  out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
  if (!out) throw data_error("failed writing checkpoint file: " + path);
}

std::vector<unsigned char> read_container(const std::string& path, std::uint32_t expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw usage_error("cannot open checkpoint file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::size_t header = kMagic.size() + 2 * sizeof(std::uint32_t);
  if (bytes.size() < header + sizeof(std::uint32_t))
    throw data_error(path + ": checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw data_error(path + ": not a model checkpoint (bad magic)");
  std::uint32_t version, kind;
  std::memcpy(&version, bytes.data() + kMagic.size(), sizeof(version));
  std::memcpy(&kind, bytes.data() + kMagic.size() + sizeof(version), sizeof(kind));
  if (version != kCheckpointVersion)
    throw data_error(path + ": unsupported checkpoint version " + std::to_string(version));
  if (kind != expected_kind) throw data_error(path + ": checkpoint holds a different model kind");

  const std::size_t payload_size = bytes.size() - header - sizeof(std::uint32_t);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + header + payload_size, sizeof(stored_crc));
  const std::uint32_t actual_crc = crc32(bytes.data() + header, payload_size);
  if (stored_crc != actual_crc)
    throw data_error(path + ": checksum mismatch, checkpoint is corrupted");
  return {bytes.begin() + static_cast<std::ptrdiff_t>(header),
          bytes.begin() + static_cast<std::ptrdiff_t>(header + payload_size)};
}

}  // namespace

void save_checkpoint(const FlowModel& model, const std::string& path) {
  Writer w;
  w.u64(model.dim);
  w.u64(model.layers.size());
  w.u32(std::holds_alternative<GaussianBase>(model.base) ? 0u : 1u);
  for (const auto& layer : model.layers) {
    w.f64(layer.scale_clamp);
    w.bytes(layer.mask);
    write_dense_net(w, layer.s_net);
    write_dense_net(w, layer.t_net);
  }
  if (const auto* rb = std::get_if<ResamplingBase>(&model.base)) {
    write_dense_net(w, rb->accept_net);
    w.u64(rb->trunc);
    w.f64(rb->z_ema);
    w.f64(rb->ema_decay);
  }
  write_container(path, kKindFlow, w.buffer());
}

FlowModel load_checkpoint(const std::string& path) {
  const std::vector<unsigned char> payload = read_container(path, kKindFlow);
  Reader r(payload.data(), payload.size(), path);

  FlowModel model;
  model.dim = r.u64();
  const std::uint64_t n_layers = r.u64();
  if (model.dim == 0 || model.dim > (1u << 20) || n_layers > (1u << 20))
    throw data_error(path + ": implausible model shape");
  const std::uint32_t base_kind = r.u32();
  if (base_kind > 1) throw data_error(path + ": unknown base distribution kind");
  model.layers.resize(n_layers);
  for (auto& layer : model.layers) {
    layer.scale_clamp = r.f64();
    r.bytes(layer.mask, model.dim);
    for (std::uint8_t m : layer.mask) {
      if (m > 1) throw data_error(path + ": mask bytes must be 0 or 1");
    }
    layer.s_net = read_dense_net(r, path);
    layer.t_net = read_dense_net(r, path);
    layer.rebuild_index();
  }
  if (base_kind == 0) {
    model.base = GaussianBase{model.dim};
  } else {
    ResamplingBase rb;
    rb.dim = model.dim;
    rb.accept_net = read_dense_net(r, path);
    rb.trunc = r.u64();
    rb.z_ema = r.f64();
    rb.ema_decay = r.f64();
    if (rb.trunc == 0) throw data_error(path + ": truncation count must be >= 1");
    if (!(rb.z_ema > 0.0 && rb.z_ema <= 1.0))
      throw data_error(path + ": stored normalizer Z out of range");
    model.base = std::move(rb);
  }
  if (!r.exhausted()) throw data_error(path + ": trailing bytes after model payload");
  validate_flow_model(model);
  return model;
}

void save_ocsvm_checkpoint(const OcSvmModel& model, const std::string& path) {
  Writer w;
  w.u64(model.dim);
  w.u64(model.n_support());
  w.f64(model.gamma);
  w.f64(model.nu);
  w.f64(model.rho);
  w.f64_block(model.alphas);
  w.f64_block(model.support_vectors);
  write_container(path, kKindOcSvm, w.buffer());
}

OcSvmModel load_ocsvm_checkpoint(const std::string& path) {
  const std::vector<unsigned char> payload = read_container(path, kKindOcSvm);
  Reader r(payload.data(), payload.size(), path);
  OcSvmModel model;
  model.dim = r.u64();
  const std::uint64_t n_sv = r.u64();
  if (model.dim == 0 || model.dim > (1u << 20) || n_sv == 0 || n_sv > (1u << 24))
    throw data_error(path + ": implausible model shape");
  model.gamma = r.f64();
  model.nu = r.f64();
  model.rho = r.f64();
  r.f64_block(model.alphas, n_sv);
  r.f64_block(model.support_vectors, n_sv * model.dim);
  if (!r.exhausted()) throw data_error(path + ": trailing bytes after model payload");
  return model;
}

std::string checkpoint_id(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw usage_error("cannot open checkpoint file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::uint32_t crc = crc32(bytes.data(), bytes.size());
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", crc);
  return buf;
}

}  // namespace flowood
