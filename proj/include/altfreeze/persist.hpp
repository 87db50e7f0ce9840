#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "altfreeze/model.hpp"
#include "altfreeze/synth.hpp"
#include "altfreeze/trainer.hpp"

namespace altfreeze {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Error raised for malformed files; the message carries the byte offset and
/// the section being read.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)),
        detail_(what),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }
  FormatError prefixed(const std::string& context) const {
    return FormatError(context + detail_, offset_);
  }

 private:
  std::string detail_;
  std::size_t offset_;
};

/// VCLP layout: magic, version u32, record count u32, then per record id u32,
/// label u8, kind u8, C,T,H,W u32 and C*T*H*W f32 values. Little-endian.
std::string encode_dataset(const ClipDataset& dataset);
ClipDataset decode_dataset(const std::string& bytes);
void save_dataset(const ClipDataset& dataset, const std::string& path);
ClipDataset load_dataset(const std::string& path);

/// Group tag written per checkpoint tensor. 0..2 mirror ParamGroup; buffers
/// (batch-norm running statistics and momentum) use 3.
inline constexpr std::uint8_t kBufferTag = 3;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct CheckpointTensor {
  std::string name;
  std::uint8_t group = 0;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<double> values;
};

/// Training state stored after the tensors. All sampling derives from
/// (seed, epoch, index), so seed plus iteration is the full RNG state.
struct TrainingInfo {
  std::uint64_t counter = 0;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  std::string model;   // model_lines() text
  std::string config;  // config_text() of the run, may be empty
};

struct CheckpointFile {
  std::vector<CheckpointTensor> tensors;
  TrainingInfo info;

  const CheckpointTensor& find(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::string encode_checkpoint(const CheckpointFile& file);
CheckpointFile decode_checkpoint(const std::string& bytes);

/// Parameters, running statistics and, when `state` is given, momentum
/// buffers, all at the model's precision.
template <typename T>
CheckpointFile make_checkpoint(const Model<T>& model, const TrainerState<T>* state,
                               std::uint64_t seed, const std::string& config = {});

template <typename T>
struct Restored {
  Model<T> model;
  TrainerState<T> state;
  bool has_state = false;
  TrainingInfo info;
};

/// Rebuilds the model from the stored spec and fills every tensor. Throws
/// when a tensor is missing, misshaped or stored at another precision.
template <typename T>
Restored<T> restore_checkpoint(const CheckpointFile& file);

template <typename T>
void save_checkpoint(const Model<T>& model, const TrainerState<T>* state, std::uint64_t seed,
                     const std::string& path, const std::string& config = {});
template <typename T>
Restored<T> load_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

/// Binary 8-bit PGM (P5) of a row-major plane.
std::string encode_pgm(std::size_t width, std::size_t height,
                       const std::vector<std::uint8_t>& pixels);
/// Maps values in [0,1] to 0..255 with nearest-neighbour upsampling by
/// `scale`.
std::string heatmap_pgm(const float* plane, std::size_t height, std::size_t width,
                        std::size_t scale = 1);

}  // namespace altfreeze
