#include <doctest.h>

#include <stdexcept>

#include "altfreeze/config.hpp"

using namespace altfreeze;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

std::string joined(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

}  // namespace

TEST_CASE("freeze ratio") {
  const RunConfig c = parse_config("freeze_ratio=20:1\n");
  CHECK(c.train.spatial_frozen_iters == 20);
  CHECK(c.train.temporal_frozen_iters == 1);
  CHECK(parse_ratio("3:2") == std::pair<std::size_t, std::size_t>{3, 2});
  CHECK_THROWS_AS(parse_config("freeze_ratio=0:1"), std::invalid_argument);
  CHECK_THROWS(parse_config("freeze_ratio=1:0"));
  CHECK_THROWS(parse_ratio("20"));
  CHECK_THROWS(parse_ratio("a:b"));
}

TEST_CASE("empty file gives the documented defaults") {
  const RunConfig c = parse_config("");
  const TrainConfig d;
  CHECK(c.train.lr == 0.05);
  CHECK(c.train.momentum == 0.9);
  CHECK(c.train.batch_size == d.batch_size);
  CHECK(c.train.epochs == d.epochs);
  CHECK(c.train.alt_freezing);
  CHECK(c.model.blocks.size() == 2);
  CHECK(c.data.frames == 8);
  CHECK(parse_config("# only a comment\n\n   \n").train.lr == 0.05);
}

TEST_CASE("errors name the line") {
  CHECK(error_of("lr=0.1\nlearning_rate=0.1\n").find("line 2") != std::string::npos);
  CHECK(error_of("lr=0.1\nlearning_rate=0.1\n").find("learning_rate") != std::string::npos);
  CHECK(error_of("\n\nepochs\n").find("line 3") != std::string::npos);
  CHECK(error_of("epochs=ten\n").find("line 1") != std::string::npos);
  CHECK(error_of("epochs=-3\n").find("line 1") != std::string::npos);
  CHECK(error_of("alt_freezing=maybe\n").find("line 1") != std::string::npos);
  CHECK(parse_config("lr=0.1 # trailing note\n").train.lr == 0.1);
}

TEST_CASE("values are applied") {
  const RunConfig c = parse_config(
      "lr = 0.01\nepochs=3\nalt_freezing=false\nbatch_size=4\nframes=12\nclip_length=8\n"
      "fake_mix=1:1:1:0\nreduction=sum\nblocks=8:8:16:1:1;16:16:32:2:1\n");
  CHECK(c.train.lr == 0.01);
  CHECK(c.train.epochs == 3);
  CHECK_FALSE(c.train.alt_freezing);
  CHECK(c.train.batch_size == 4);
  CHECK(c.data.frames == 12);
  CHECK(c.data.train_mix.mixed == 0.0);
  CHECK(c.train.reduction == Reduction::sum);
  CHECK(c.model.input_shape == Shape{3, 8, 32, 32});
}

TEST_CASE("cross-field validation") {
  CHECK_THROWS(parse_config("clip_length=9\n"));
  CHECK_THROWS(parse_config("channels=1\nstem_channels=0\n"));
}

TEST_CASE("config and model text round-trip") {
  const RunConfig c = parse_config("lr=0.02\nseed=5\nfreeze_ratio=7:3\nhead_hidden=4\n");
  const RunConfig back = parse_config(joined(config_lines(c)));
  CHECK(config_text(back) == config_text(c));
  CHECK(back.train.spatial_frozen_iters == 7);
  CHECK(back.model.head_hidden == 4);
  const ModelSpec m = parse_model(joined(model_lines(c.model)));
  CHECK(joined(model_lines(m)) == joined(model_lines(c.model)));
  CHECK(m.blocks.size() == c.model.blocks.size());
}
