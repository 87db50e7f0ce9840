#include "altfreeze/metrics.hpp"

#include <cmath>
#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace altfreeze {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auc: " + std::to_string(scores.size()) + " scores vs " +
                                std::to_string(labels.size()) + " labels");
  }
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  for (double v : scores) {
    if (!std::isfinite(v)) throw std::invalid_argument("auc: scores must be finite");
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("auc: both classes must be present");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Rank sums are half-integers, exact in double for these sizes.
  double positive_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) positive_rank_sum += midrank;
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1) / 2) / (p * n);
}

std::vector<std::size_t> spaced_windows(std::size_t n, std::size_t k) {
  if (n == 0) throw std::invalid_argument("video has no windows");
  if (k == 0) throw std::invalid_argument("need at least one window per video");
  std::vector<std::size_t> out;
  if (k >= n) {
    out.resize(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  for (std::size_t j = 0; j < k; ++j) out.push_back((2 * j + 1) * n / (2 * k));
  return out;
}

std::vector<Clip> clip_windows(const Clip& video, std::size_t length) {
  if (length == 0 || video.frames() < length) {
    throw std::invalid_argument("video of " + std::to_string(video.frames()) +
                                " frames has no window of length " + std::to_string(length));
  }
  std::vector<Clip> out;
  for (std::size_t start = 0; start + length <= video.frames(); ++start) {
    Clip w(video.channels(), length, video.height(), video.width());
    for (std::size_t c = 0; c < video.channels(); ++c)
      for (std::size_t t = 0; t < length; ++t) {
        const auto src = video.plane(c, start + t);
        std::copy(src.begin(), src.end(), w.plane(c, t).begin());
      }
    out.push_back(std::move(w));
  }
  return out;
}

template <typename T>
double video_score(Model<T>& model, std::span<const Clip> windows, std::size_t k) {
  if (windows.empty()) throw std::invalid_argument("video_score: empty video");
  const auto picked = spaced_windows(windows.size(), k);
  double total = 0;
  for (std::size_t i : picked) total += model.forward(to_batch<T>(windows[i]), Mode::eval)[0];
  return total / static_cast<double>(picked.size());
}

template <typename T>
double video_score(Model<T>& model, const Clip& video, std::size_t k) {
  const std::size_t length = model.spec().input_shape[1];
  if (video.frames() == length) return video_score(model, std::span<const Clip>(&video, 1), k);
  const auto windows = clip_windows(video, length);
  return video_score(model, std::span<const Clip>(windows), k);
}

std::string EvalReport::summary_csv() const {
  std::ostringstream os;
  os << "# windows_per_video=" << windows_per_video << " seed=" << seed << '\n';
  os << "dataset,name,auc\n" << std::setprecision(10);
  for (const auto& d : datasets) os << d.source << ',' << d.name << ',' << d.auc << '\n';
  return os.str();
}

std::string EvalReport::scores_csv() const {
  std::ostringstream os;
  os << "dataset,id,label,kind,score\n" << std::setprecision(10);
  for (const auto& d : datasets)
    for (std::size_t i = 0; i < d.scores.size(); ++i)
      os << d.name << ',' << d.ids[i] << ',' << d.labels[i] << ',' << to_string(d.kinds[i]) << ','
         << d.scores[i] << '\n';
  return os.str();
}

const DatasetScores& EvalReport::find(const std::string& name) const {
  for (const auto& d : datasets)
    if (d.name == name) return d;
  throw std::out_of_range("no evaluated dataset named " + name);
}

template <typename T>
EvalReport run_eval(Model<T>& model, const std::vector<NamedDataset>& datasets,
                    std::size_t windows_per_video, std::uint64_t seed) {
  EvalReport report;
  report.windows_per_video = windows_per_video;
  report.seed = seed;
  for (const NamedDataset& nd : datasets) {
    if (!nd.data) throw std::invalid_argument("run_eval: dataset " + nd.name + " is null");
    DatasetScores s;
    s.name = nd.name;
    s.source = nd.source.empty() ? nd.name : nd.source;
    for (const ClipRecord& r : nd.data->records) {
      s.ids.push_back(r.id);
      s.labels.push_back(r.label);
      s.kinds.push_back(r.kind);
      s.scores.push_back(video_score(model, r.clip, windows_per_video));
    }
    s.auc = auc(s.scores, s.labels);
    report.datasets.push_back(std::move(s));
  }
  return report;
}

template double video_score(Model<float>&, std::span<const Clip>, std::size_t);
template double video_score(Model<double>&, std::span<const Clip>, std::size_t);
template double video_score(Model<float>&, const Clip&, std::size_t);
template double video_score(Model<double>&, const Clip&, std::size_t);
template EvalReport run_eval(Model<float>&, const std::vector<NamedDataset>&, std::size_t,
                             std::uint64_t);
template EvalReport run_eval(Model<double>&, const std::vector<NamedDataset>&, std::size_t,
                             std::uint64_t);

}  // namespace altfreeze
