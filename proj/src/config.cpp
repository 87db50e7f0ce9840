#include "altfreeze/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace altfreeze {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

template <typename N>
N parse_number(const std::string& text) {
  N value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw std::invalid_argument("'" + text + "' is not a valid number");
  }
  return value;
}

std::size_t parse_count(const std::string& text) { return parse_number<std::size_t>(text); }

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("'" + text + "' is not true/false");
}

Kernel3 parse_kernel(const std::string& text) {
  const auto parts = split(text, 'x');
  if (parts.size() != 3) throw std::invalid_argument("kernel '" + text + "' is not TxHxW");
  return Kernel3{parse_count(parts[0]), parse_count(parts[1]), parse_count(parts[2])};
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::string format_blocks(const std::vector<BlockSpec>& blocks) {
  std::string out;
  for (const auto& b : blocks) {
    if (!out.empty()) out += ';';
    out += std::to_string(b.in_channels) + ':' + std::to_string(b.mid_channels) + ':' +
           std::to_string(b.out_channels) + ':' + std::to_string(b.spatial_stride) + ':' +
           (b.has_projection ? "1" : "0");
  }
  return out;
}

// "in:mid:out:stride[:projection]" separated by ';'. Block kernels come from
// the block_*_kernel keys.
std::vector<BlockSpec> parse_blocks(const std::string& text, const std::vector<BlockSpec>& prev) {
  std::vector<BlockSpec> out;
  if (text.empty()) return out;
  for (const auto& item : split(text, ';')) {
    const auto f = split(item, ':');
    if (f.size() != 4 && f.size() != 5) {
      throw std::invalid_argument("block '" + item + "' is not in:mid:out:stride[:projection]");
    }
    BlockSpec b;
    if (!prev.empty()) {
      b.temporal_kernel = prev.front().temporal_kernel;
      b.spatial_kernel = prev.front().spatial_kernel;
    }
    b.in_channels = parse_count(f[0]);
    b.mid_channels = parse_count(f[1]);
    b.out_channels = parse_count(f[2]);
    b.spatial_stride = parse_count(f[3]);
    b.has_projection = f.size() == 5 ? parse_bool(f[4])
                                     : (b.in_channels != b.out_channels || b.spatial_stride != 1);
    out.push_back(b);
  }
  return out;
}

std::string format_mix(const KindMix& m) {
  return fmt(m.tdrop) + ':' + fmt(m.trepeat) + ':' + fmt(m.blend) + ':' + fmt(m.mixed);
}

KindMix parse_mix(const std::string& text) {
  const auto f = split(text, ':');
  if (f.size() != 4) throw std::invalid_argument("fake_mix '" + text + "' is not tdrop:trepeat:blend:mixed");
  return KindMix{parse_number<double>(f[0]), parse_number<double>(f[1]),
                 parse_number<double>(f[2]), parse_number<double>(f[3])};
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& model_fields() {
  static const std::vector<Field> fields = {
      {"stem_channels", [](RunConfig& c, const std::string& v) {
         c.model.stem.out_channels = parse_count(v);
       }, [](const RunConfig& c) { return std::to_string(c.model.stem.out_channels); }},
      {"stem_stride", [](RunConfig& c, const std::string& v) {
         c.model.stem.spatial_stride = parse_count(v);
       }, [](const RunConfig& c) { return std::to_string(c.model.stem.spatial_stride); }},
      {"stem_spatial_kernel", [](RunConfig& c, const std::string& v) {
         c.model.stem.spatial_kernel = parse_kernel(v);
       }, [](const RunConfig& c) { return to_string(c.model.stem.spatial_kernel); }},
      {"stem_temporal_kernel", [](RunConfig& c, const std::string& v) {
         c.model.stem.temporal_kernel = parse_kernel(v);
       }, [](const RunConfig& c) { return to_string(c.model.stem.temporal_kernel); }},
      {"block_temporal_kernel", [](RunConfig& c, const std::string& v) {
         for (auto& b : c.model.blocks) b.temporal_kernel = parse_kernel(v);
       }, [](const RunConfig& c) {
         return c.model.blocks.empty() ? std::string("3x1x1")
                                       : to_string(c.model.blocks.front().temporal_kernel);
       }},
      {"block_spatial_kernel", [](RunConfig& c, const std::string& v) {
         for (auto& b : c.model.blocks) b.spatial_kernel = parse_kernel(v);
       }, [](const RunConfig& c) {
         return c.model.blocks.empty() ? std::string("1x3x3")
                                       : to_string(c.model.blocks.front().spatial_kernel);
       }},
      {"blocks", [](RunConfig& c, const std::string& v) {
         c.model.blocks = parse_blocks(v, c.model.blocks);
       }, [](const RunConfig& c) { return format_blocks(c.model.blocks); }},
      {"head_hidden", [](RunConfig& c, const std::string& v) {
         c.model.head_hidden = parse_count(v);
       }, [](const RunConfig& c) { return std::to_string(c.model.head_hidden); }},
  };
  return fields;
}

const std::vector<Field>& other_fields() {
  static const std::vector<Field> fields = {
      // Clip geometry, shared by the data generator and the model input.
      {"channels", [](RunConfig& c, const std::string& v) { c.data.channels = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.channels); }},
      {"frames", [](RunConfig& c, const std::string& v) { c.data.frames = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.frames); }},
      {"height", [](RunConfig& c, const std::string& v) { c.data.height = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.height); }},
      {"width", [](RunConfig& c, const std::string& v) { c.data.width = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.width); }},
      {"data_seed", [](RunConfig& c, const std::string& v) {
         c.data.seed = parse_number<std::uint64_t>(v);
       }, [](const RunConfig& c) { return std::to_string(c.data.seed); }},
      {"train_real", [](RunConfig& c, const std::string& v) { c.data.train.real = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.train.real); }},
      {"train_fake", [](RunConfig& c, const std::string& v) { c.data.train.fake = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.train.fake); }},
      {"val_real", [](RunConfig& c, const std::string& v) { c.data.val.real = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.val.real); }},
      {"val_fake", [](RunConfig& c, const std::string& v) { c.data.val.fake = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.val.fake); }},
      {"probe_real", [](RunConfig& c, const std::string& v) { c.data.probe.real = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.probe.real); }},
      {"probe_fake", [](RunConfig& c, const std::string& v) { c.data.probe.fake = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.data.probe.fake); }},
      {"fake_mix", [](RunConfig& c, const std::string& v) { c.data.train_mix = parse_mix(v); },
       [](const RunConfig& c) { return format_mix(c.data.train_mix); }},
      {"train_same_video_prob", [](RunConfig& c, const std::string& v) {
         c.data.train_fake.same_video_prob = parse_number<double>(v);
       }, [](const RunConfig& c) { return fmt(c.data.train_fake.same_video_prob); }},
      {"probe_mask_override", [](RunConfig& c, const std::string& v) {
         c.data.probe_mask_override = parse_number<double>(v);
       }, [](const RunConfig& c) { return fmt(c.data.probe_mask_override); }},

      {"batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"clip_length", [](RunConfig& c, const std::string& v) {
         c.train.clip_length = parse_count(v);
       }, [](const RunConfig& c) { return std::to_string(c.train.clip_length); }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"max_iterations", [](RunConfig& c, const std::string& v) {
         c.train.max_iterations = parse_number<std::uint64_t>(v);
       }, [](const RunConfig& c) { return std::to_string(c.train.max_iterations); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.train.lr = parse_number<double>(v); },
       [](const RunConfig& c) { return fmt(c.train.lr); }},
      {"momentum", [](RunConfig& c, const std::string& v) {
         c.train.momentum = parse_number<double>(v);
       }, [](const RunConfig& c) { return fmt(c.train.momentum); }},
      {"freeze_ratio", [](RunConfig& c, const std::string& v) {
         std::tie(c.train.spatial_frozen_iters, c.train.temporal_frozen_iters) = parse_ratio(v);
       }, [](const RunConfig& c) {
         return std::to_string(c.train.spatial_frozen_iters) + ':' +
                std::to_string(c.train.temporal_frozen_iters);
       }},
      {"alt_freezing", [](RunConfig& c, const std::string& v) {
         c.train.alt_freezing = parse_bool(v);
       }, [](const RunConfig& c) { return fmt(c.train.alt_freezing); }},
      {"seed", [](RunConfig& c, const std::string& v) {
         c.train.seed = parse_number<std::uint64_t>(v);
       }, [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"fake_aug", [](RunConfig& c, const std::string& v) { c.train.fake_aug = parse_bool(v); },
       [](const RunConfig& c) { return fmt(c.train.fake_aug); }},
      {"fake_aug_prob", [](RunConfig& c, const std::string& v) {
         c.train.fake_aug_prob = parse_number<double>(v);
       }, [](const RunConfig& c) { return fmt(c.train.fake_aug_prob); }},
      {"same_video_prob", [](RunConfig& c, const std::string& v) {
         c.train.same_video_prob = parse_number<double>(v);
       }, [](const RunConfig& c) { return fmt(c.train.same_video_prob); }},
      {"aug_flip", [](RunConfig& c, const std::string& v) {
         c.train.standard_augs.flip = parse_bool(v);
       }, [](const RunConfig& c) { return fmt(c.train.standard_augs.flip); }},
      {"aug_cutout", [](RunConfig& c, const std::string& v) {
         c.train.standard_augs.cutout = parse_bool(v);
       }, [](const RunConfig& c) { return fmt(c.train.standard_augs.cutout); }},
      {"aug_noise", [](RunConfig& c, const std::string& v) {
         c.train.standard_augs.noise = parse_bool(v);
       }, [](const RunConfig& c) { return fmt(c.train.standard_augs.noise); }},
      {"reduction", [](RunConfig& c, const std::string& v) {
         if (v == "mean") c.train.reduction = Reduction::mean;
         else if (v == "sum") c.train.reduction = Reduction::sum;
         else throw std::invalid_argument("reduction must be mean or sum");
       }, [](const RunConfig& c) {
         return std::string(c.train.reduction == Reduction::mean ? "mean" : "sum");
       }},
      {"eval_every", [](RunConfig& c, const std::string& v) { c.train.eval_every = parse_count(v); },
       [](const RunConfig& c) { return std::to_string(c.train.eval_every); }},
  };
  return fields;
}

const Field* find_field(const std::string& key) {
  for (const auto* fields : {&model_fields(), &other_fields()})
    for (const auto& f : *fields)
      if (key == f.key) return &f;
  return nullptr;
}

// Applies key=value lines to `config`; `allowed` restricts the key set.
void apply_lines(RunConfig& config, const std::string& text,
                 const std::vector<Field>* allowed = nullptr) {
  std::istringstream is(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(where + ": missing key");
    const Field* field = find_field(key);
    if (field && allowed) {
      bool ok = false;
      for (const auto& f : *allowed) ok = ok || &f == field;
      if (!ok) field = nullptr;
    }
    if (!field) throw std::invalid_argument(where + ": unknown key '" + key + "'");
    try {
      field->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + ": " + key + ": " + e.what());
    }
  }
}

void sync_input_shape(RunConfig& c) {
  c.model.input_shape = {c.data.channels, c.train.clip_length, c.data.height, c.data.width};
  c.model.stem.in_channels = c.data.channels;
}

}  // namespace

std::pair<std::size_t, std::size_t> parse_ratio(const std::string& text) {
  const auto f = split(text, ':');
  if (f.size() != 2) throw std::invalid_argument("ratio '" + text + "' is not I_s:I_t");
  return {parse_count(f[0]), parse_count(f[1])};
}

void RunConfig::validate() const {
  train.validate();
  altfreeze::validate(data);
  altfreeze::validate(model);
  if (train.clip_length > data.frames) {
    throw std::invalid_argument("clip_length " + std::to_string(train.clip_length) +
                                " exceeds the " + std::to_string(data.frames) +
                                " generated frames");
  }
  const Shape expected{data.channels, train.clip_length, data.height, data.width};
  if (model.input_shape != expected) {
    throw std::invalid_argument("model input " + to_string(model.input_shape) +
                                " does not match clip geometry " + to_string(expected));
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  apply_lines(config, text);
  sync_input_shape(config);
  config.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return parse_config(os.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

std::vector<std::string> config_lines(const RunConfig& config) {
  std::vector<std::string> out;
  for (const auto* fields : {&other_fields(), &model_fields()})
    for (const auto& f : *fields) out.push_back(std::string(f.key) + "=" + f.get(config));
  return out;
}

std::string config_text(const RunConfig& config) {
  std::string out;
  for (const auto& line : config_lines(config)) out += line + '\n';
  return out;
}

std::vector<std::string> model_lines(const ModelSpec& spec) {
  RunConfig c;
  c.model = spec;
  std::vector<std::string> out;
  for (const auto& f : model_fields()) out.push_back(std::string(f.key) + "=" + f.get(c));
  const Shape& in = spec.input_shape;
  out.push_back("input_shape=" + std::to_string(in.at(0)) + 'x' + std::to_string(in.at(1)) +
                'x' + std::to_string(in.at(2)) + 'x' + std::to_string(in.at(3)));
  return out;
}

ModelSpec parse_model(const std::string& text) {
  RunConfig c;
  std::string rest;
  std::istringstream is(text);
  std::string line;
  Shape input;
  while (std::getline(is, line)) {
    if (line.rfind("input_shape=", 0) == 0) {
      for (const auto& part : split(line.substr(12), 'x')) input.push_back(parse_count(part));
      if (input.size() != 4) throw std::invalid_argument("input_shape needs four extents");
    } else {
      rest += line + '\n';
    }
  }
  apply_lines(c, rest, &model_fields());
  if (input.empty()) throw std::invalid_argument("model description lacks input_shape");
  c.model.input_shape = input;
  c.model.stem.in_channels = input[0];
  validate(c.model);
  return c.model;
}

}  // namespace altfreeze
