#include "altfreeze/persist.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "altfreeze/config.hpp"
#include "altfreeze/partition.hpp"

namespace altfreeze {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swapping");

namespace {

constexpr char kDatasetMagic[4] = {'V', 'C', 'L', 'P'};
constexpr char kCheckpointMagic[4] = {'A', 'F', 'C', 'K'};
constexpr char kStateMagic[4] = {'T', 'R', 'S', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void text(const std::string& s) {
    u32(checked_u32(s.size(), "string length"));
    bytes(s.data(), s.size());
  }
  static std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xffffffffULL) throw std::length_error(std::string(what) + " exceeds 32 bits");
    return static_cast<std::uint32_t>(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  void section(std::string name) { section_ = std::move(name); }
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  void bytes(void* p, std::size_t n) {
    if (data_.size() - pos_ < n) {
      throw FormatError("truncated file: " + section_ + " needs " + std::to_string(n) +
                            " bytes, " + std::to_string(data_.size() - pos_) + " left",
                        pos_);
    }
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  std::string text() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void magic(const char (&expected)[4], const char* what) {
    char m[4];
    const std::size_t at = pos_;
    bytes(m, 4);
    if (std::memcmp(m, expected, 4) != 0) {
      throw FormatError(std::string("bad magic for ") + what + ", expected '" +
                            std::string(expected, 4) + "'",
                        at);
    }
  }
  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw FormatError(what + " in " + section_, at);
  }
  void require(std::size_t count, std::size_t unit) {
    if (unit != 0 && count > (data_.size() - pos_) / unit) {
      throw FormatError("truncated file: " + section_ + " declares " + std::to_string(count) +
                            " values but only " + std::to_string(data_.size() - pos_) +
                            " bytes remain",
                        pos_);
    }
  }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
  std::string section_ = "header";
};

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string encode_dataset(const ClipDataset& dataset) {
  Writer w;
  w.bytes(kDatasetMagic, 4);
  w.u32(kDatasetVersion);
  w.u32(Writer::checked_u32(dataset.records.size(), "record count"));
  for (const ClipRecord& r : dataset.records) {
    if (r.label > 1) throw std::invalid_argument("record " + std::to_string(r.id) + " has label > 1");
    w.u32(r.id);
    w.u8(r.label);
    w.u8(static_cast<std::uint8_t>(r.kind));
    const Clip& c = r.clip;
    for (std::size_t e : {c.channels(), c.frames(), c.height(), c.width()})
      w.u32(Writer::checked_u32(e, "clip extent"));
    for (float v : c.tensor().values()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw std::invalid_argument("record " + std::to_string(r.id) + " has a value outside [0,1]");
      }
      w.f32(v);
    }
  }
  return w.take();
}

ClipDataset decode_dataset(const std::string& bytes) {
  Reader r(bytes);
  r.magic(kDatasetMagic, "clip dataset");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.u32();
  ClipDataset out;
  for (std::uint32_t i = 0; i < count; ++i) {
    r.section("record " + std::to_string(i) + " of " + std::to_string(count));
    const std::size_t start = r.offset();
    ClipRecord rec;
    rec.id = r.u32();
    rec.label = r.u8();
    const std::uint8_t kind = r.u8();
    if (rec.label > 1) r.fail("label " + std::to_string(rec.label) + " is not 0 or 1", start + 4);
    if (kind > static_cast<std::uint8_t>(ClipKind::mixed)) {
      r.fail("unknown kind byte " + std::to_string(kind), start + 5);
    }
    rec.kind = static_cast<ClipKind>(kind);
    std::uint32_t dims[4];
    for (auto& d : dims) d = r.u32();
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || dims[3] == 0) {
      r.fail("zero clip extent", start + 6);
    }
    const std::size_t n = std::size_t{dims[0]} * dims[1] * dims[2] * dims[3];
    r.require(n, 4);
    std::vector<float> values(n);
    const std::size_t values_at = r.offset();
    r.bytes(values.data(), n * 4);
    for (std::size_t k = 0; k < n; ++k) {
      // Written so that NaN fails as well.
      if (!(values[k] >= 0.0f && values[k] <= 1.0f)) {
        r.fail("value " + std::to_string(values[k]) + " outside [0,1]", values_at + 4 * k);
      }
    }
    rec.clip = Clip(Tensor<float>({dims[0], dims[1], dims[2], dims[3]}, std::move(values)));
    out.records.push_back(std::move(rec));
  }
  r.section("end of file");
  if (!r.at_end()) r.fail("trailing bytes after the declared records", r.offset());
  return out;
}

void save_dataset(const ClipDataset& dataset, const std::string& path) {
  write_file(path, encode_dataset(dataset));
}

ClipDataset load_dataset(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_dataset(bytes);
  } catch (const FormatError& e) {
    throw e.prefixed(path + ": ");
  }
}

const CheckpointTensor& CheckpointFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw std::out_of_range("checkpoint has no tensor named " + name);
}

bool CheckpointFile::contains(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const CheckpointTensor& t) { return t.name == name; });
}

std::string encode_checkpoint(const CheckpointFile& file) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(Writer::checked_u32(file.tensors.size(), "tensor count"));
  for (const CheckpointTensor& t : file.tensors) {
    if (numel(t.shape) != t.values.size()) {
      throw std::invalid_argument("tensor " + t.name + " has " + std::to_string(t.values.size()) +
                                  " values for shape " + to_string(t.shape));
    }
    w.text(t.name);
    w.u8(t.group);
    w.u8(static_cast<std::uint8_t>(t.dtype));
    w.u32(Writer::checked_u32(t.shape.size(), "rank"));
    for (std::size_t e : t.shape) w.u32(Writer::checked_u32(e, "extent"));
    for (double v : t.values) {
      if (t.dtype == DType::f32) w.f32(static_cast<float>(v));
      else w.f64(v);
    }
  }
  w.bytes(kStateMagic, 4);
  w.u64(file.info.counter);
  w.u64(file.info.iteration);
  w.u64(file.info.seed);
  w.text(file.info.model);
  w.text(file.info.config);
  return w.take();
}

CheckpointFile decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.magic(kCheckpointMagic, "checkpoint");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.u32();
  CheckpointFile out;
  for (std::uint32_t i = 0; i < count; ++i) {
    r.section("tensor " + std::to_string(i) + " of " + std::to_string(count));
    CheckpointTensor t;
    t.name = r.text();
    r.section("tensor " + t.name);
    const std::size_t tag_at = r.offset();
    t.group = r.u8();
    if (t.group > kBufferTag) r.fail("unknown group tag " + std::to_string(t.group), tag_at);
    const std::uint8_t dtype = r.u8();
    if (dtype > 1) r.fail("unknown dtype code " + std::to_string(dtype), tag_at + 1);
    t.dtype = static_cast<DType>(dtype);
    const std::uint32_t rank = r.u32();
    r.require(rank, 4);
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.u32());
      n *= t.shape.back();
    }
    const std::size_t width = t.dtype == DType::f32 ? 4 : 8;
    r.require(n, width);
    t.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (t.dtype == DType::f32) {
        float v;
        r.bytes(&v, 4);
        t.values[k] = v;
      } else {
        double v;
        r.bytes(&v, 8);
        t.values[k] = v;
      }
    }
    out.tensors.push_back(std::move(t));
  }
  r.section("training-state block");
  r.magic(kStateMagic, "training-state block");
  out.info.counter = r.u64();
  out.info.iteration = r.u64();
  out.info.seed = r.u64();
  out.info.model = r.text();
  out.info.config = r.text();
  r.section("end of file");
  if (!r.at_end()) r.fail("trailing bytes after the training-state block", r.offset());
  return out;
}

namespace {

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

template <typename T>
CheckpointTensor to_entry(std::string name, std::uint8_t group, const Tensor<T>& t) {
  CheckpointTensor e{std::move(name), group, dtype_of<T>(), t.shape(), {}};
  e.values.assign(t.values().begin(), t.values().end());
  return e;
}

template <typename T>
void fill_from(const CheckpointFile& file, const std::string& name, Tensor<T>& dst) {
  if (!file.contains(name)) throw std::invalid_argument("checkpoint is missing tensor " + name);
  const CheckpointTensor& e = file.find(name);
  if (e.dtype != dtype_of<T>()) {
    throw std::invalid_argument("tensor " + name + " is stored at another precision");
  }
  if (e.shape != dst.shape()) {
    throw std::invalid_argument("tensor " + name + " has shape " + to_string(e.shape) +
                                ", model expects " + to_string(dst.shape()));
  }
  for (std::size_t i = 0; i < e.values.size(); ++i) dst[i] = static_cast<T>(e.values[i]);
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + '\n';
  return out;
}

}  // namespace

template <typename T>
CheckpointFile make_checkpoint(const Model<T>& model, const TrainerState<T>* state,
                               std::uint64_t seed, const std::string& config) {
  CheckpointFile file;
  const auto groups = group_of_params(model);
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    file.tensors.push_back(
        to_entry(params[i].info.name, static_cast<std::uint8_t>(groups[i]), params[i].value));
  }
  for (const auto& s : model.norm_stats()) {
    file.tensors.push_back(to_entry(s.name + ".running_mean", kBufferTag, s.stats.running_mean));
    file.tensors.push_back(to_entry(s.name + ".running_var", kBufferTag, s.stats.running_var));
  }
  if (state) {
    if (state->momentum.size() != params.size()) {
      throw std::invalid_argument("trainer state does not match the model's parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      file.tensors.push_back(
          to_entry("momentum." + params[i].info.name, kBufferTag, state->momentum[i]));
    }
    file.info.counter = state->counter;
    file.info.iteration = state->iteration;
  }
  file.info.seed = seed;
  file.info.model = join_lines(model_lines(model.spec()));
  file.info.config = config;
  return file;
}

template <typename T>
Restored<T> restore_checkpoint(const CheckpointFile& file) {
  Restored<T> out{Model<T>(parse_model(file.info.model)), {}, false, file.info};
  auto& params = out.model.parameters();
  const auto groups = group_of_params(out.model);
  for (std::size_t i = 0; i < params.size(); ++i) {
    fill_from(file, params[i].info.name, params[i].value);
    if (file.find(params[i].info.name).group != static_cast<std::uint8_t>(groups[i])) {
      throw std::invalid_argument("tensor " + params[i].info.name + " carries the wrong group tag");
    }
  }
  for (auto& s : out.model.norm_stats()) {
    fill_from(file, s.name + ".running_mean", s.stats.running_mean);
    fill_from(file, s.name + ".running_var", s.stats.running_var);
  }
  if (!params.empty() && file.contains("momentum." + params.front().info.name)) {
    out.has_state = true;
    out.state.iteration = file.info.iteration;
    out.state.counter = file.info.counter;
    for (const auto& p : params) {
      Tensor<T> m(p.value.shape());
      fill_from(file, "momentum." + p.info.name, m);
      out.state.momentum.push_back(std::move(m));
    }
  }
  return out;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const TrainerState<T>* state, std::uint64_t seed,
                     const std::string& path, const std::string& config) {
  write_file(path, encode_checkpoint(make_checkpoint(model, state, seed, config)));
}

template <typename T>
Restored<T> load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    return restore_checkpoint<T>(decode_checkpoint(bytes));
  } catch (const FormatError& e) {
    throw e.prefixed(path + ": ");
  }
}

std::string encode_pgm(std::size_t width, std::size_t height,
                       const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != width * height) throw std::invalid_argument("pgm: pixel count mismatch");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  return out;
}

std::string heatmap_pgm(const float* plane, std::size_t height, std::size_t width,
                        std::size_t scale) {
  if (scale == 0) throw std::invalid_argument("pgm: scale must be >= 1");
  const std::size_t w = width * scale;
  const std::size_t h = height * scale;
  std::vector<std::uint8_t> px(w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const float v = std::clamp(plane[(y / scale) * width + x / scale], 0.0f, 1.0f);
      px[y * w + x] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return encode_pgm(w, h, px);
}

template CheckpointFile make_checkpoint(const Model<float>&, const TrainerState<float>*,
                                        std::uint64_t, const std::string&);
template CheckpointFile make_checkpoint(const Model<double>&, const TrainerState<double>*,
                                        std::uint64_t, const std::string&);
template Restored<float> restore_checkpoint(const CheckpointFile&);
template Restored<double> restore_checkpoint(const CheckpointFile&);
template void save_checkpoint(const Model<float>&, const TrainerState<float>*, std::uint64_t,
                              const std::string&, const std::string&);
template void save_checkpoint(const Model<double>&, const TrainerState<double>*, std::uint64_t,
                              const std::string&, const std::string&);
template Restored<float> load_checkpoint(const std::string&);
template Restored<double> load_checkpoint(const std::string&);

}  // namespace altfreeze
