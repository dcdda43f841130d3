#include "vqc/artifacts.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string_view>

#include "vqc/errors.hpp"

namespace vqc::artifacts {

namespace {

using Bytes = std::vector<std::uint8_t>;
using Tag = std::array<char, 4>;

constexpr Tag kTagMeta = {'M', 'E', 'T', 'A'};
constexpr Tag kTagEncoder = {'E', 'N', 'C', 'D'};
constexpr Tag kTagDecoder = {'D', 'E', 'C', 'D'};
constexpr Tag kTagCodebook = {'C', 'D', 'B', 'K'};
constexpr Tag kTagDataHeader = {'D', 'S', 'H', 'D'};
constexpr Tag kTagScaler = {'S', 'C', 'A', 'L'};
constexpr Tag kTagMixture = {'M', 'I', 'X', 'T'};
constexpr Tag kTagSamples = {'S', 'M', 'P', 'L'};
constexpr Tag kTagLabels = {'L', 'A', 'B', 'L'};
constexpr Tag kTagSplit = {'S', 'P', 'L', 'T'};
constexpr Tag kTagEmbeddings = {'E', 'M', 'B', 'D'};
constexpr Tag kTagTokens = {'T', 'O', 'K', 'N'};
constexpr Tag kTagAssignment = {'A', 'S', 'G', 'N'};
constexpr Tag kTagReconstruction = {'R', 'E', 'C', 'N'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto raw = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(raw.begin(), raw.end());
    return std::bit_cast<T>(raw);
  }
  return v;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const T le = to_little(v);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&le);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(v); }
  void vec(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void uvec(const std::vector<std::uint64_t>& v) {
    u64(v.size());
    for (auto x : v) u64(x);
  }
  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double x : m.data()) f64(x);
  }
  void section(const Tag& tag, const Writer& payload) {
    out_.insert(out_.end(), tag.begin(), tag.end());
    u64(payload.out_.size());
    out_.insert(out_.end(), payload.out_.begin(), payload.out_.end());
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return get<double>(); }
  std::size_t count(std::size_t elem_bytes) {
    const std::uint64_t n = u64();
    if (elem_bytes > 0 && n > (size_ - pos_) / elem_bytes) throw IoError("corrupt artifact: length exceeds payload");
    return static_cast<std::size_t>(n);
  }
  std::vector<double> vec() {
    std::vector<double> v(count(8));
    for (double& x : v) x = f64();
    return v;
  }
  std::vector<std::uint64_t> uvec() {
    std::vector<std::uint64_t> v(count(8));
    for (auto& x : v) x = u64();
    return v;
  }
  Matrix matrix() {
    const std::uint64_t rows = u64();
    const std::uint64_t cols = u64();
    if (cols != 0 && rows > (size_ - pos_) / 8 / cols) throw IoError("corrupt artifact: matrix exceeds payload");
    Matrix m(rows, cols);
    for (double& x : m.data()) x = f64();
    return m;
  }
  Tag tag() {
    need(4);
    Tag t;
    std::memcpy(t.data(), data_ + pos_, 4);
    pos_ += 4;
    return t;
  }
  Reader sub(std::size_t n) {
    need(n);
    Reader r(data_ + pos_, n);
    pos_ += n;
    return r;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw IoError("truncated artifact");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_header(Writer& w, ArtifactKind kind) {
  for (char c : kMagic) w.put(static_cast<std::uint8_t>(c));
  w.u32(kFormatVersion);
  w.u32(kEndianMarker);
  w.u32(static_cast<std::uint32_t>(kind));
}

std::map<Tag, Reader> read_sections(const Bytes& bytes, ArtifactKind expected) {
  if (peek_kind(bytes) != expected) throw IoError("artifact holds a different kind of payload");
  Reader r(bytes.data(), bytes.size());
  r.sub(16);
  std::map<Tag, Reader> sections;
  while (!r.done()) {
    const Tag t = r.tag();
    const std::uint64_t n = r.u64();
    sections.insert_or_assign(t, r.sub(static_cast<std::size_t>(n)));
  }
  return sections;
}

Reader& section(std::map<Tag, Reader>& sections, const Tag& tag) {
  auto it = sections.find(tag);
  if (it == sections.end()) {
    throw IoError("artifact is missing section " + std::string(tag.begin(), tag.end()));
  }
  return it->second;
}

Writer mlp_payload(const Mlp& net) {
  Writer w;
  w.u64(net.num_layers());
  w.u64(net.step_count());
  for (const auto& l : net.layers()) {
    w.matrix(l.weight);
    w.vec(l.bias);
    w.matrix(l.m_weight);
    w.matrix(l.v_weight);
    w.vec(l.m_bias);
    w.vec(l.v_bias);
  }
  return w;
}

Mlp read_mlp(Reader& r) {
  const std::size_t n = r.count(0);
  const std::uint64_t steps = r.u64();
  std::vector<LinearLayer> layers;
  for (std::size_t i = 0; i < n; ++i) {
    LinearLayer l;
    l.weight = r.matrix();
    l.bias = r.vec();
    l.m_weight = r.matrix();
    l.v_weight = r.matrix();
    l.m_bias = r.vec();
    l.v_bias = r.vec();
    l.grad_weight = Matrix(l.weight.rows(), l.weight.cols());
    l.grad_bias.assign(l.bias.size(), 0.0);
    const bool shapes_ok = l.bias.size() == l.out_dim() && l.m_weight.rows() == l.out_dim() &&
                           l.m_weight.cols() == l.in_dim() && l.v_weight.rows() == l.out_dim() &&
                           l.v_weight.cols() == l.in_dim() && l.m_bias.size() == l.out_dim() &&
                           l.v_bias.size() == l.out_dim();
    if (!shapes_ok) throw IoError("corrupt artifact: layer buffers disagree in shape");
    layers.push_back(std::move(l));
  }
  try {
    Mlp net(std::move(layers));
    net.set_step_count(steps);
    return net;
  } catch (const ConfigError& e) {
    throw IoError(std::string("corrupt artifact: ") + e.what());
  }
}

std::vector<std::uint64_t> to_u64(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}
std::vector<std::size_t> to_size(const std::vector<std::uint64_t>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

ArtifactKind peek_kind(const Bytes& bytes) {
  if (bytes.size() < 16) throw IoError("artifact too short for a header");
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) throw IoError("bad magic, not a VQC artifact");
  Reader r(bytes.data() + 4, 12);
  const std::uint32_t version = r.u32();
  const std::uint32_t marker = r.u32();
  const std::uint32_t kind = r.u32();
  if (marker != kEndianMarker) throw IoError("unexpected byte order marker");
  if (version != kFormatVersion) throw IoError("unsupported artifact version " + std::to_string(version));
  if (kind < 1 || kind > 3) throw IoError("unknown artifact kind " + std::to_string(kind));
  return static_cast<ArtifactKind>(kind);
}

Bytes encode_checkpoint(const VqVae& model) {
  Writer w;
  write_header(w, ArtifactKind::kCheckpoint);
  Writer meta;
  meta.f64(model.beta);
  w.section(kTagMeta, meta);
  w.section(kTagEncoder, mlp_payload(model.encoder));
  w.section(kTagDecoder, mlp_payload(model.decoder));
  Writer cb;
  const Codebook& c = model.codebook;
  cb.f64(c.gamma());
  cb.u32(c.initialized() ? 1 : 0);
  cb.matrix(c.tokens());
  cb.matrix(c.ema_sum());
  cb.vec(c.ema_count());
  w.section(kTagCodebook, cb);
  return w.take();
}

VqVae decode_checkpoint(const Bytes& bytes) {
  auto sections = read_sections(bytes, ArtifactKind::kCheckpoint);
  const double beta = section(sections, kTagMeta).f64();
  Mlp enc = read_mlp(section(sections, kTagEncoder));
  Mlp dec = read_mlp(section(sections, kTagDecoder));
  Reader& r = section(sections, kTagCodebook);
  const double gamma = r.f64();
  const bool initialized = r.u32() != 0;
  Matrix tokens = r.matrix();
  Matrix sums = r.matrix();
  std::vector<double> counts = r.vec();
  try {
    Codebook cb(tokens.rows(), tokens.cols(), gamma);
    cb.restore(std::move(tokens), std::move(sums), std::move(counts), initialized);
    return VqVae(std::move(enc), std::move(dec), std::move(cb), beta);
  } catch (const ConfigError& e) {
    throw IoError(std::string("corrupt checkpoint: ") + e.what());
  }
}

Bytes encode_dataset(const GaussianMixtureDataset& ds) {
  Writer w;
  write_header(w, ArtifactKind::kDataset);
  Writer head;
  head.u64(ds.dim());
  head.u64(ds.size());
  head.u64(ds.spec.n_clusters);
  head.u64(ds.spec.seed);
  head.u64(ds.spec.points_per_cluster);
  head.f64(ds.spec.test_fraction);
  w.section(kTagDataHeader, head);
  Writer scal;
  scal.vec(ds.scaler.mean);
  scal.vec(ds.scaler.std);
  w.section(kTagScaler, scal);
  Writer mix;
  mix.matrix(ds.spec.cluster_means);
  mix.vec(ds.spec.cluster_stds);
  w.section(kTagMixture, mix);
  Writer smpl;
  smpl.matrix(ds.samples);
  w.section(kTagSamples, smpl);
  Writer labl;
  labl.uvec(to_u64(ds.labels));
  w.section(kTagLabels, labl);
  Writer split;
  split.uvec(to_u64(ds.train_indices));
  split.uvec(to_u64(ds.test_indices));
  w.section(kTagSplit, split);
  return w.take();
}

GaussianMixtureDataset decode_dataset(const Bytes& bytes) {
  auto sections = read_sections(bytes, ArtifactKind::kDataset);
  GaussianMixtureDataset ds;
  Reader& head = section(sections, kTagDataHeader);
  const std::uint64_t dim = head.u64();
  const std::uint64_t n = head.u64();
  ds.spec.n_clusters = head.u64();
  ds.spec.seed = head.u64();
  ds.spec.points_per_cluster = head.u64();
  ds.spec.test_fraction = head.f64();
  ds.spec.dim = dim;
  Reader& scal = section(sections, kTagScaler);
  ds.scaler.mean = scal.vec();
  ds.scaler.std = scal.vec();
  Reader& mix = section(sections, kTagMixture);
  ds.spec.cluster_means = mix.matrix();
  ds.spec.cluster_stds = mix.vec();
  ds.samples = section(sections, kTagSamples).matrix();
  ds.labels = to_size(section(sections, kTagLabels).uvec());
  Reader& split = section(sections, kTagSplit);
  ds.train_indices = to_size(split.uvec());
  ds.test_indices = to_size(split.uvec());

  bool ok = ds.samples.rows() == n && ds.samples.cols() == dim && ds.labels.size() == n &&
            ds.scaler.mean.size() == dim && ds.scaler.std.size() == dim &&
            ds.spec.cluster_means.rows() == ds.spec.n_clusters &&
            ds.spec.cluster_means.cols() == dim && ds.spec.cluster_stds.size() == ds.spec.n_clusters &&
            ds.train_indices.size() + ds.test_indices.size() == n;
  for (std::size_t l : ds.labels) ok = ok && l < ds.spec.n_clusters;
  for (std::size_t i : ds.train_indices) ok = ok && i < n;
  for (std::size_t i : ds.test_indices) ok = ok && i < n;
  if (!ok) throw IoError("corrupt dataset: sections disagree in shape");
  return ds;
}

Bytes encode_dump(const Dump& dump) {
  Writer w;
  write_header(w, ArtifactKind::kDump);
  Writer e, t, a, l, r;
  e.matrix(dump.embeddings);
  t.matrix(dump.tokens);
  a.uvec(dump.assignment);
  l.uvec(dump.labels);
  r.matrix(dump.reconstructions);
  w.section(kTagEmbeddings, e);
  w.section(kTagTokens, t);
  w.section(kTagAssignment, a);
  w.section(kTagLabels, l);
  w.section(kTagReconstruction, r);
  return w.take();
}

Dump decode_dump(const Bytes& bytes) {
  auto sections = read_sections(bytes, ArtifactKind::kDump);
  Dump d;
  d.embeddings = section(sections, kTagEmbeddings).matrix();
  d.tokens = section(sections, kTagTokens).matrix();
  d.assignment = section(sections, kTagAssignment).uvec();
  d.labels = section(sections, kTagLabels).uvec();
  d.reconstructions = section(sections, kTagReconstruction).matrix();
  return d;
}

Dump make_dump(const VqVae& model, const GaussianMixtureDataset& ds) {
  Dump d;
  d.embeddings = model.encode(ds.samples);
  const Quantized q = model.quantize_latents(d.embeddings);
  d.tokens = model.codebook.tokens();
  d.assignment = to_u64(q.assignment.indices);
  d.labels = to_u64(ds.labels);
  d.reconstructions = model.decode(q.values);
  return d;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

void save_checkpoint(const std::filesystem::path& path, const VqVae& model) {
  write_file(path, encode_checkpoint(model));
}
VqVae load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }
void save_dataset(const std::filesystem::path& path, const GaussianMixtureDataset& ds) {
  write_file(path, encode_dataset(ds));
}
GaussianMixtureDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file(path));
}
void save_dump(const std::filesystem::path& path, const Dump& dump) { write_file(path, encode_dump(dump)); }
Dump load_dump(const std::filesystem::path& path) { return decode_dump(read_file(path)); }

}  // namespace vqc::artifacts
