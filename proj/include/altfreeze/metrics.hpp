#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "altfreeze/clip.hpp"
#include "altfreeze/model.hpp"
#include "altfreeze/synth.hpp"

namespace altfreeze {

/// Area under the ROC curve via the Mann-Whitney statistic with midranks:
/// the fraction of (positive, negative) pairs ordered correctly, ties 0.5.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Default number of windows averaged per video.
inline constexpr std::size_t kDefaultWindowsPerVideo = 8;

/// Indices of k uniformly spaced windows out of n (all of them when k >= n).
std::vector<std::size_t> spaced_windows(std::size_t n, std::size_t k);

/// Every length-`length` window of a long clip, stride one frame.
std::vector<Clip> clip_windows(const Clip& video, std::size_t length);

/// Mean eval-mode probability over k uniformly spaced windows.
template <typename T>
double video_score(Model<T>& model, std::span<const Clip> windows, std::size_t k);

/// Cuts `video` into windows of the model's input length first.
template <typename T>
double video_score(Model<T>& model, const Clip& video, std::size_t k);

struct NamedDataset {
  std::string name;
  std::string source;
  const ClipDataset* data = nullptr;
};

struct DatasetScores {
  std::string name;
  std::string source;
  double auc = 0.0;
  std::vector<std::uint32_t> ids;
  std::vector<int> labels;
  std::vector<ClipKind> kinds;
  std::vector<double> scores;
};

struct EvalReport {
  std::vector<DatasetScores> datasets;
  std::size_t windows_per_video = kDefaultWindowsPerVideo;
  std::uint64_t seed = 0;

  /// "dataset,name,auc" rows preceded by a config comment line.
  std::string summary_csv() const;
  /// "dataset,id,label,kind,score" rows.
  std::string scores_csv() const;
  const DatasetScores& find(const std::string& name) const;
};

/// Scores every record of every dataset as one video.
template <typename T>
EvalReport run_eval(Model<T>& model, const std::vector<NamedDataset>& datasets,
                    std::size_t windows_per_video = kDefaultWindowsPerVideo,
                    std::uint64_t seed = 0);

}  // namespace altfreeze
