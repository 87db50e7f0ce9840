// Command-line front end: gen-data, train, eval, partition, augment, cam.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "altfreeze/augment.hpp"
#include "altfreeze/config.hpp"
#include "altfreeze/metrics.hpp"
#include "altfreeze/model.hpp"
#include "altfreeze/partition.hpp"
#include "altfreeze/persist.hpp"
#include "altfreeze/synth.hpp"
#include "altfreeze/trainer.hpp"

namespace fs = std::filesystem;
using namespace altfreeze;

namespace {

RunConfig config_from(const std::string& path) {
  return path.empty() ? parse_config("") : load_config(path);
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void write_split(const fs::path& dir, const std::string& name, const ClipDataset& data) {
  save_dataset(data, join(dir, name + ".vclp"));
  write_file(join(dir, name + ".manifest.txt"), manifest_text(data));
}

struct GenDataArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

void gen_data(const GenDataArgs& a) {
  RunConfig c = config_from(a.config);
  if (a.seed) c.data.seed = *a.seed;
  fs::create_directories(a.out);
  write_split(a.out, "train", build_training_set(c.data));
  write_split(a.out, "val", build_validation_set(c.data));
  write_split(a.out, "temporal", build_temporal_set(c.data));
  write_split(a.out, "spatial", build_spatial_set(c.data));
  write_file(join(a.out, "config.txt"), config_text(c));
  std::cout << "wrote train, val, temporal and spatial sets to " << a.out << '\n';
}

struct TrainArgs {
  std::string config, data, out, log, resume;
  std::optional<std::uint64_t> seed, max_iterations;
  std::optional<bool> alt;
  bool quiet = false;
};

void train_cmd(const TrainArgs& a) {
  RunConfig c = config_from(a.config);
  if (a.seed) c.train.seed = *a.seed;
  if (a.max_iterations) c.train.max_iterations = *a.max_iterations;
  if (a.alt) c.train.alt_freezing = *a.alt;
  c.validate();
  const ClipDataset train_set = load_dataset(join(a.data, "train.vclp"));
  std::optional<ClipDataset> val;
  if (c.train.eval_every > 0 && fs::exists(join(a.data, "val.vclp"))) {
    val = load_dataset(join(a.data, "val.vclp"));
  }
  // The iteration cap is a stopping point, not part of the run's identity.
  RunConfig identity = c;
  identity.train.max_iterations = 0;
  const std::string text = config_text(identity);

  Model<float> model = build_model<float>(c.model, c.train.seed);
  std::optional<TrainerState<float>> resume_state;
  if (!a.resume.empty()) {
    Restored<float> r = load_checkpoint<float>(a.resume);
    if (!r.has_state) throw std::runtime_error(a.resume + " holds no training state");
    if (!r.info.config.empty() && r.info.config != text) {
      throw std::runtime_error(a.resume + " was written by a run with a different config");
    }
    model = std::move(r.model);
    resume_state = std::move(r.state);
  }
  Trainer<float> trainer(model, train_set, c.train, val ? &*val : nullptr);
  if (resume_state) trainer.restore(*resume_state);

  const TrainLog log = trainer.run([&](const IterationLog& it) {
    if (!a.quiet && (it.iteration + 1) % trainer.batches_per_epoch() == 0) {
      std::cerr << "epoch " << it.epoch << " iter " << it.iteration + 1 << " loss " << it.loss
                << '\n';
    }
  });
  const TrainerState<float> state = trainer.state();
  save_checkpoint(model, &state, c.train.seed, a.out, text);
  if (!a.log.empty()) {
    std::vector<std::string> header = config_lines(c);
    header.push_back("resumed_from=" + std::to_string(resume_state ? resume_state->iteration : 0));
    write_file(a.log, log.csv(header));
  }
  std::cout << "trained " << log.iterations.size() << " iterations (" << trainer.iteration()
            << " of " << trainer.total_iterations() << "), checkpoint " << a.out << '\n';
}

struct EvalArgs {
  std::string ckpt, data, out, scores;
  std::vector<std::string> datasets;
  std::size_t windows = kDefaultWindowsPerVideo;
};

void eval_cmd(const EvalArgs& a) {
  Restored<float> r = load_checkpoint<float>(a.ckpt);
  std::vector<std::pair<std::string, std::string>> sources;
  for (const auto& item : a.datasets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--dataset expects name=path: " + item);
    sources.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  if (!a.data.empty()) {
    for (const char* name : {"temporal", "spatial", "val"}) {
      const std::string path = join(a.data, std::string(name) + ".vclp");
      if (fs::exists(path)) sources.emplace_back(name, path);
    }
  }
  if (sources.empty()) throw std::invalid_argument("nothing to evaluate: pass --data or --dataset");
  std::vector<ClipDataset> loaded;
  loaded.reserve(sources.size());
  std::vector<NamedDataset> named;
  for (const auto& [name, path] : sources) {
    loaded.push_back(load_dataset(path));
    named.push_back(NamedDataset{name, path, &loaded.back()});
  }
  const EvalReport report = run_eval(r.model, named, a.windows, r.info.seed);
  if (!a.out.empty()) write_file(a.out, report.summary_csv());
  if (!a.scores.empty()) write_file(a.scores, report.scores_csv());
  for (const auto& d : report.datasets) std::cout << d.name << " auc " << d.auc << '\n';
}

struct PartitionArgs {
  std::string ckpt, config;
};

void partition_cmd(const PartitionArgs& a) {
  if (!a.ckpt.empty()) {
    const Restored<float> r = load_checkpoint<float>(a.ckpt);
    std::cout << partition_report(r.model.named_params());
  } else {
    const RunConfig c = config_from(a.config);
    std::cout << partition_report(Model<float>(c.model).named_params());
  }
}

struct AugmentArgs {
  std::string in, out, op;
  std::size_t index = 0;
  std::optional<std::size_t> partner;
  std::uint64_t seed = 0;
  int level = 3;
};

void augment_cmd(const AugmentArgs& a) {
  const ClipDataset data = load_dataset(a.in);
  if (a.index >= data.size()) {
    throw std::out_of_range("clip index " + std::to_string(a.index) + " out of range (" +
                            std::to_string(data.size()) + " clips)");
  }
  const ClipRecord& src = data.records[a.index];
  Rng rng(a.seed);
  ClipRecord out{src.id, 1, src.kind, src.clip, 0};
  if (a.op == "tdrop" || a.op == "trepeat" || a.op == "blend") {
    std::size_t partner_index = a.partner.value_or((a.index + 1) % data.size());
    if (partner_index >= data.size()) throw std::out_of_range("partner index out of range");
    const FakeKind kind = a.op == "tdrop"     ? FakeKind::tdrop
                          : a.op == "trepeat" ? FakeKind::trepeat
                                              : FakeKind::blend;
    FakeOptions options;
    if (a.partner) options.same_video_prob = 0.0;
    out.clip = make_fake(src.clip, data.records[partner_index].clip, kind, rng, options);
    out.kind = static_cast<ClipKind>(kind);
  } else if (a.op == "flip" || a.op == "standard") {
    out.label = src.label;
    out.clip = a.op == "flip" ? horizontal_flip(src.clip) : standard_augs(src.clip, rng);
  } else {
    out.label = src.label;
    out.clip = perturb(src.clip, parse_perturb_kind(a.op), a.level, rng);
  }
  ClipDataset result;
  result.records.push_back(std::move(out));
  save_dataset(result, a.out);
  std::cout << "wrote " << a.op << " of clip " << a.index << " to " << a.out << '\n';
}

struct CamArgs {
  std::string ckpt, in, out_dir;
  std::size_t index = 0;
  std::vector<std::size_t> frames;
};

void cam_cmd(const CamArgs& a) {
  Restored<float> r = load_checkpoint<float>(a.ckpt);
  const ClipDataset data = load_dataset(a.in);
  if (a.index >= data.size()) throw std::out_of_range("clip index out of range");
  const Clip& clip = data.records[a.index].clip;
  const Tensor<float> heat = cam(r.model, clip);
  const std::size_t t = heat.extent(0), h = heat.extent(1), w = heat.extent(2);
  const std::size_t scale = std::max<std::size_t>(1, clip.height() / h);
  std::vector<std::size_t> frames = a.frames;
  if (frames.empty()) {
    for (std::size_t i = 0; i < t; ++i) frames.push_back(i);
  }
  fs::create_directories(a.out_dir);
  for (std::size_t f : frames) {
    if (f >= t) throw std::out_of_range("heatmap has " + std::to_string(t) + " frames");
    const std::string path = join(a.out_dir, "cam_" + std::to_string(a.index) + "_t" +
                                                 std::to_string(f) + ".pgm");
    // Each image is stretched to the full 0..255 range on its own.
    std::vector<float> plane(heat.data() + f * h * w, heat.data() + (f + 1) * h * w);
    const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
    const float low = *lo, span = *hi - *lo;
    for (float& v : plane) v = span > 0 ? (v - low) / span : 0.0f;
    write_file(path, heatmap_pgm(plane.data(), h, w, scale));
    std::cout << path << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alternating spatial/temporal freezing for clip forgery detection"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic benchmark");
  gen_cmd->add_option("--config", gen.config, "key=value config file");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed (overrides data_seed)");

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train a model on <data>/train.vclp");
  train_sub->add_option("--config", tr.config, "key=value config file");
  train_sub->add_option("--data", tr.data, "Directory written by gen-data")->required();
  train_sub->add_option("--out", tr.out, "Checkpoint path")->required();
  train_sub->add_option("--log", tr.log, "Metric log CSV path");
  train_sub->add_option("--seed", tr.seed, "Training seed (overrides seed)");
  train_sub->add_option("--max-iters", tr.max_iterations, "Stop after this many iterations");
  train_sub->add_option("--alt-freezing", tr.alt, "Enable or disable alternating freezing");
  train_sub->add_option("--resume", tr.resume, "Continue from a checkpoint");
  train_sub->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "Video-level AUC on stored datasets");
  eval_sub->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  eval_sub->add_option("--data", ev.data, "Directory with temporal/spatial/val sets");
  eval_sub->add_option("--dataset", ev.datasets, "Extra dataset as name=path");
  eval_sub->add_option("--out", ev.out, "Summary CSV path");
  eval_sub->add_option("--scores", ev.scores, "Per-clip score CSV path");
  eval_sub->add_option("--windows", ev.windows, "Windows averaged per video");

  PartitionArgs pa;
  auto* part_sub = app.add_subcommand("partition", "Print the parameter group report");
  auto* ckpt_opt = part_sub->add_option("--ckpt", pa.ckpt, "Checkpoint");
  part_sub->add_option("--config", pa.config, "Config (when no checkpoint)")->excludes(ckpt_opt);

  AugmentArgs au;
  auto* aug_sub = app.add_subcommand("augment", "Apply one augmentation to a stored clip");
  aug_sub->add_option("--in", au.in, "Input dataset")->required();
  aug_sub->add_option("--index", au.index, "Clip index");
  aug_sub->add_option("--op", au.op,
                      "tdrop, trepeat, blend, flip, standard, blur, block or contrast")
      ->required()
      ->check(CLI::IsMember(
          {"tdrop", "trepeat", "blend", "flip", "standard", "blur", "block", "contrast"}));
  aug_sub->add_option("--partner", au.partner, "Foreground clip index for blend");
  aug_sub->add_option("--seed", au.seed, "RNG seed");
  aug_sub->add_option("--level", au.level, "Perturbation level 0..5")->check(CLI::Range(0, 5));
  aug_sub->add_option("--out", au.out, "Output dataset")->required();

  CamArgs ca;
  auto* cam_sub = app.add_subcommand("cam", "Write class activation maps as PGM images");
  cam_sub->add_option("--ckpt", ca.ckpt, "Checkpoint")->required();
  cam_sub->add_option("--in", ca.in, "Dataset holding the clip")->required();
  cam_sub->add_option("--index", ca.index, "Clip index");
  cam_sub->add_option("--frames", ca.frames, "Heatmap frames to write (default all)");
  cam_sub->add_option("--out-dir", ca.out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) gen_data(gen);
    else if (*train_sub) train_cmd(tr);
    else if (*eval_sub) eval_cmd(ev);
    else if (*part_sub) partition_cmd(pa);
    else if (*aug_sub) augment_cmd(au);
    else if (*cam_sub) cam_cmd(ca);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "altfreeze: " << msg << '\n';
    return 1;
  }
  return 0;
}
