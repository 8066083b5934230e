#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <vector>

#include "diffprior/binary_io.hpp"
#include "diffprior/data.hpp"
#include "diffprior/errors.hpp"

using namespace diffprior;
namespace fs = std::filesystem;

namespace {

const std::string kTiny = " --set clips=10 --set train_steps=40 --set hidden=8 --set embedding=4 --set sinkhorn_windows=8";

int run(const std::string& args) {
  const std::string cmd = std::string(DIFFPRIOR_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("diffprior_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("analyze is deterministic and starts at the isotropic draw") {
    const fs::path a = fresh_dir("analyze_a"), b = fresh_dir("analyze_b");
    REQUIRE(run("analyze --draws 5 --dims 4,16 --seed 3 --out " + a.string()) == 0);
    REQUIRE(run("analyze --draws 5 --dims 4,16 --seed 3 --out " + b.string()) == 0);
    const std::string text = read_text_file(a / "analysis.csv");
    CHECK(text == read_text_file(b / "analysis.csv"));
    // header plus the isotropic draw 0 and five random draws per dimension
    CHECK(line_count(text) == 13);
    std::istringstream lines(text);
    std::string header, first;
    std::getline(lines, header);
    std::getline(lines, first);
    std::vector<std::string> f;
    std::istringstream cells(first);
    for (std::string cell; std::getline(cells, cell, ',');) f.push_back(cell);
    REQUIRE(f.size() == 10);
    CHECK(f[2] == "0");
    CHECK(f[4] == f[5]);
    CHECK(f[7] == "1");
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("synth, train, sample, evaluate and schedule-search") {
    const fs::path corpus = fresh_dir("corpus"), run1 = fresh_dir("run1"), run2 = fresh_dir("run2");
    REQUIRE(run("synth" + kTiny + " --out " + corpus.string()) == 0);
    const auto manifest = read_manifest(corpus / "manifest.tsv");
    CHECK(manifest.size() == 10);
    CHECK(fs::exists(corpus / "labels.tsv"));
    const std::string train_tsv = (corpus / "train.tsv").string();
    const std::string test_tsv = (corpus / "test.tsv").string();

    REQUIRE(run("train" + kTiny + " --seed 5 --manifest " + train_tsv + " --out " + run1.string()) == 0);
    REQUIRE(run("train" + kTiny + " --seed 5 --manifest " + train_tsv + " --out " + run2.string()) == 0);
    CHECK(read_file_bytes(run1 / "checkpoint.pgc1") == read_file_bytes(run2 / "checkpoint.pgc1"));
    const std::string loss = read_text_file(run1 / "loss.csv");
    CHECK(line_count(loss) == 41);
    CHECK(fs::exists(run1 / "config.txt"));

    const std::string ckpt = (run1 / "checkpoint.pgc1").string();
    const fs::path gen = fresh_dir("generated");
    REQUIRE(run("sample" + kTiny + " --checkpoint " + ckpt + " --manifest " + test_tsv + " --out " + gen.string()) == 0);
    for (const auto& e : read_manifest(corpus / "test.tsv")) {
      CHECK(read_wav(gen / (e.id + ".wav")).samples.size() == read_wav(e.path).samples.size());
    }

    // references scored against themselves
    const fs::path ev = fresh_dir("evaluate");
    REQUIRE(run("evaluate" + kTiny + " --generated " + corpus.string() + " --manifest " + test_tsv + " --out " +
                ev.string()) == 0);
    std::istringstream rows(read_text_file(ev / "metrics.csv"));
    std::string row;
    std::getline(rows, row);
    int n = 0;
    while (std::getline(rows, row)) {
      ++n;
      std::vector<std::string> fields;
      std::istringstream cells(row);
      for (std::string f; std::getline(cells, f, ',');) fields.push_back(f);
      REQUIRE(fields.size() == 6);
      for (int k : {1, 2, 3, 5}) CHECK(fields[static_cast<std::size_t>(k)] == "0.000000");
    }
    CHECK(n == static_cast<int>(read_manifest(corpus / "test.tsv").size()));

    const fs::path search = fresh_dir("search");
    REQUIRE(run("schedule-search" + kTiny + " --checkpoint " + ckpt + " --manifest " + (corpus / "validation.tsv").string() +
                " --out " + search.string()) == 0);
    CHECK(fs::exists(search / "fast_schedule.txt"));

    write_text_file(search / "bad.txt", "0.3\n0.1\n");
    CHECK(run("sample" + kTiny + " --checkpoint " + ckpt + " --manifest " + test_tsv + " --fast-schedule " +
              (search / "bad.txt").string() + " --out " + gen.string()) == exit_code(ErrorKind::InvalidArgument));

    for (const fs::path& p : {corpus, run1, run2, gen, ev, search}) fs::remove_all(p);
  }

  TEST_CASE("exit codes") {
    const fs::path out = fresh_dir("codes");
    CHECK(run("analyze --set no_such_key=1 --out " + out.string()) == exit_code(ErrorKind::Config));
    CHECK(run("train --set train_steps=0 --out " + out.string()) == exit_code(ErrorKind::Config));
    CHECK(run("no-such-command") == 1);
    CHECK(run("sample --checkpoint " + (out / "missing.pgc1").string() + " --out " + out.string()) != 0);
    fs::remove_all(out);
  }
}
