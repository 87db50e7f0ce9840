#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "altfreeze/persist.hpp"

namespace fs = std::filesystem;
using altfreeze::read_file;
using altfreeze::write_file;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "altfreeze_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    write_file((d / "c.txt").string(),
               "train_real=4\ntrain_fake=4\nval_real=2\nval_fake=2\nprobe_real=4\nprobe_fake=4\n"
               "epochs=2\nbatch_size=4\n");
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

/// Runs the tool with `args`; stdout and stderr go to files in the work dir.
int run(const std::string& args) {
  const std::string cmd = std::string(ALTFREEZE_CLI) + " " + args + " >" + path("stdout.txt") + " 2>" +
                          path("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void gen_data(const std::string& dir, int seed = 7) {
  REQUIRE(run("gen-data --config " + path("c.txt") + " --out " + path(dir) + " --seed " + std::to_string(seed)) == 0);
}

}  // namespace

TEST_CASE("gen-data is deterministic") {
  gen_data("d1");
  gen_data("d2");
  gen_data("d3", 8);
  for (const char* name : {"train.vclp", "val.vclp", "temporal.vclp", "spatial.vclp", "train.manifest.txt"}) {
    CHECK(read_file(path(std::string("d1/") + name)) == read_file(path(std::string("d2/") + name)));
  }
  CHECK(read_file(path("d1/train.vclp")) != read_file(path("d3/train.vclp")));
}

TEST_CASE("train is deterministic and resume reproduces the uninterrupted run") {
  gen_data("dt");
  const std::string common = " --config " + path("c.txt") + " --data " + path("dt") + " --quiet";
  REQUIRE(run("train" + common + " --out " + path("a.afck") + " --log " + path("a.csv")) == 0);
  REQUIRE(run("train" + common + " --out " + path("b.afck") + " --log " + path("b.csv")) == 0);
  CHECK(read_file(path("a.afck")) == read_file(path("b.afck")));
  CHECK(read_file(path("a.csv")) == read_file(path("b.csv")));

  REQUIRE(run("train" + common + " --out " + path("h.afck") + " --max-iters 1") == 0);
  REQUIRE(run("train" + common + " --out " + path("r.afck") + " --log " + path("r.csv") + " --resume " + path("h.afck")) == 0);
  CHECK(read_file(path("a.afck")) == read_file(path("r.afck")));
  // The resumed log holds the tail of the full trace.
  const std::string full = read_file(path("a.csv")), tail = read_file(path("r.csv"));
  const std::string last_rows = tail.substr(tail.find("\n1,"));
  CHECK(full.find(last_rows) != std::string::npos);

  REQUIRE(run("train" + common + " --out " + path("s.afck") + " --seed 1 --resume " + path("h.afck")) != 0);
}

TEST_CASE("partition report of a checkpoint") {
  gen_data("dp");
  REQUIRE(run("train --config " + path("c.txt") + " --data " + path("dp") + " --out " + path("p.afck") + " --max-iters 1 --quiet") == 0);
  REQUIRE(run("partition --ckpt " + path("p.afck")) == 0);
  const std::string out = read_file(path("stdout.txt"));
  CHECK(out.find("total spatial   tensors=3 params=3096") != std::string::npos);
  CHECK(out.find("total temporal  tensors=3 params=1152") != std::string::npos);
  CHECK(out.find("total shared    tensors=32 params=2001") != std::string::npos);
}

TEST_CASE("eval, augment and cam outputs") {
  gen_data("de");
  REQUIRE(run("train --config " + path("c.txt") + " --data " + path("de") + " --out " + path("e.afck") + " --quiet") == 0);
  REQUIRE(run("eval --ckpt " + path("e.afck") + " --data " + path("de") + " --out " + path("e.csv") + " --scores " + path("s.csv") + " --windows 1") == 0);
  const std::string summary = read_file(path("e.csv"));
  CHECK(summary.find("temporal,") != std::string::npos);
  CHECK(summary.find("spatial,") != std::string::npos);

  REQUIRE(run("augment --in " + path("de/temporal.vclp") + " --index 0 --op tdrop --seed 2 --out " + path("aug.vclp")) == 0);
  const auto aug = altfreeze::load_dataset(path("aug.vclp"));
  REQUIRE(aug.size() == 1);
  CHECK(aug.records[0].label == 1);
  CHECK_FALSE(aug.records[0].clip == altfreeze::load_dataset(path("de/temporal.vclp")).records[0].clip);

  REQUIRE(run("cam --ckpt " + path("e.afck") + " --in " + path("de/spatial.vclp") + " --index 5 --frames 0 3 --out-dir " + path("cams")) == 0);
  for (const char* name : {"cams/cam_5_t0.pgm", "cams/cam_5_t3.pgm"}) {
    const std::string pgm = read_file(path(name));
    REQUIRE(pgm.rfind("P5\n32 32\n255\n", 0) == 0);
    const std::string px = pgm.substr(13);
    CHECK(px.size() == 32 * 32);
    CHECK(px.find('\x00') != std::string::npos);
    CHECK(px.find('\xFF') != std::string::npos);
  }
}

TEST_CASE("failures exit nonzero with one diagnostic line") {
  const std::string cases[] = {
      "augment --in " + path("missing.vclp") + " --op tdrop --out " + path("x.vclp"),
      "eval --ckpt " + path("missing.afck") + " --data " + path("d1"),
      "train --config " + path("bad.txt") + " --data " + path("d1") + " --out " + path("x.afck"),
  };
  write_file(path("bad.txt"), "epochs=2\nlearning_rate=3\n");
  for (const auto& args : cases) {
    INFO(args);
    CHECK(run(args) != 0);
    const std::string err = read_file(path("stderr.txt"));
    CHECK(err.rfind("altfreeze: ", 0) == 0);
    CHECK(std::count(err.begin(), err.end(), '\n') == 1);
  }
  CHECK(read_file(path("stderr.txt")).find("line 2") != std::string::npos);
  CHECK(run("augment --in " + path("d1/train.vclp") + " --op sharpen --out " + path("x.vclp")) != 0);
}
