#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "gradcheck.hpp"
#include "kernels.hpp"
#include "model.hpp"
#include "ocksr.hpp"
#include "oracle_utils.hpp"
#include "rng.hpp"

using mtoc::Config;
using mtoc::DatasetBundle;
using mtoc::Index;
using mtoc::Matrix;
using mtoc::Variant;
using mtoc::Vector;

namespace {

namespace fs = std::filesystem;

// Fresh scratch directory per test binary run.
fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "mtoc-harness-tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string scratch(const std::string& name) {
  return (scratch_dir() / name).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

mtoc::ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const mtoc::Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return mtoc::ErrorCode::InvalidArgument;
}

DatasetBundle small_synth(uint64_t seed = 3) {
  mtoc::SynthSpec spec;
  spec.tasks = 3;
  spec.per_task = 6;
  spec.dim = 3;
  spec.relatedness = 0.7;
  spec.test_pos_per_task = 4;
  spec.test_neg_per_task = 6;
  return mtoc::synth_tasks(spec, seed);
}

bool identical(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != b(i, j)) return false;
  return true;
}

// A tiny two-task dataset with well-separated clusters, fully in-memory.
const char* kTinyCsv =
    "f0,f1,task,split,label\n"
    "0.0,0.1,0,train,\n"
    "0.1,0.0,0,train,\n"
    "0.05,0.12,0,train,\n"
    "5.0,5.1,1,train,\n"
    "5.1,5.0,1,train,\n"
    "5.05,4.9,1,train,\n"
    "0.02,0.08,0,test,target\n"
    "0.12,0.03,0,test,target\n"
    "7.5,-3.0,0,test,nontarget\n"
    "5.2,4.8,0,test,nontarget\n"
    "5.02,5.08,1,test,target\n"
    "4.9,5.12,1,test,target\n"
    "-2.0,9.0,1,test,nontarget\n"
    "0.1,0.1,1,test,nontarget\n";

}  // namespace

TEST_CASE("csv round trip preserves the bundle exactly") {
  const auto bundle = small_synth();
  const std::string path = scratch("roundtrip.csv");
  mtoc::save_csv(path, bundle);
  const auto loaded = mtoc::load_csv(path);
  CHECK(identical(loaded.train_features, bundle.train_features));
  CHECK(identical(loaded.test_features, bundle.test_features));
  CHECK(loaded.train_task_ids == bundle.train_task_ids);
  CHECK(loaded.test_task_ids == bundle.test_task_ids);
  CHECK(loaded.test_is_target == bundle.test_is_target);
  CHECK(loaded.task_count == bundle.task_count);
}

TEST_CASE("csv loader distinguishes schema and parse failures") {
  SUBCASE("basic two-task file loads") {
    const std::string path = scratch("tiny.csv");
    write_file(path, kTinyCsv);
    const auto bundle = mtoc::load_csv(path);
    CHECK(bundle.task_count == 2);
    CHECK(bundle.train_features.rows() == 6);
    CHECK(bundle.test_features.rows() == 8);
    // Grouped by task, original within-task order kept.
    CHECK(bundle.train_task_ids == std::vector<int>{0, 0, 0, 1, 1, 1});
  }

  SUBCASE("missing header columns are schema errors") {
    const std::string path = scratch("bad_header.csv");
    write_file(path, "f0,f1,task,split\n0,0,0,train\n");
    CHECK(code_of([&] { mtoc::load_csv(path); }) == mtoc::ErrorCode::Schema);
  }

  SUBCASE("misnamed feature column is a schema error") {
    const std::string path = scratch("bad_feature.csv");
    write_file(path, "x0,f1,task,split,label\n0,0,0,train,\n");
    CHECK(code_of([&] { mtoc::load_csv(path); }) == mtoc::ErrorCode::Schema);
  }

  SUBCASE("non-numeric feature is a parse error citing its line") {
    std::string text = "f0,f1,task,split,label\n";
    for (int i = 0; i < 5; ++i) text += "0.0,1.0,0,train,\n";
    text += "0.0,oops,0,test,target\n";  // line 7
    text += "1.0,1.0,0,test,nontarget\n";
    const std::string path = scratch("bad_float.csv");
    write_file(path, text);
    try {
      mtoc::load_csv(path);
      FAIL("expected parse error");
    } catch (const mtoc::Error& e) {
      CHECK(e.code() == mtoc::ErrorCode::Parse);
      CHECK(std::string(e.what()).find(":7:") != std::string::npos);
    }
  }

  SUBCASE("wrong arity is a parse error") {
    const std::string path = scratch("bad_arity.csv");
    write_file(path,
               "f0,f1,task,split,label\n0.0,1.0,0,train\n"
               "0.0,1.0,0,test,target\n");
    CHECK(code_of([&] { mtoc::load_csv(path); }) == mtoc::ErrorCode::Parse);
  }

  SUBCASE("gapped task ids are a schema error") {
    const std::string path = scratch("gap.csv");
    write_file(path,
               "f0,task,split,label\n"
               "0.0,0,train,\n1.0,2,train,\n"
               "0.0,0,test,target\n1.0,2,test,nontarget\n");
    CHECK(code_of([&] { mtoc::load_csv(path); }) == mtoc::ErrorCode::Schema);
  }

  SUBCASE("training rows must not carry a nontarget label") {
    const std::string path = scratch("bad_train_label.csv");
    write_file(path,
               "f0,task,split,label\n0.0,0,train,nontarget\n"
               "0.0,0,test,target\n");
    CHECK(code_of([&] { mtoc::load_csv(path); }) == mtoc::ErrorCode::Parse);
  }

  SUBCASE("test rows must carry a label") {
    const std::string path = scratch("missing_label.csv");
    write_file(path,
               "f0,task,split,label\n0.0,0,train,\n0.5,0,test,\n");
    CHECK(code_of([&] { mtoc::load_csv(path); }) == mtoc::ErrorCode::Parse);
  }

  SUBCASE("a file without test rows is unusable") {
    const std::string path = scratch("no_test.csv");
    write_file(path, "f0,task,split,label\n0.0,0,train,\n");
    CHECK(code_of([&] { mtoc::load_csv(path); }) == mtoc::ErrorCode::Schema);
  }

  SUBCASE("missing file is an io error") {
    CHECK(code_of([&] { mtoc::load_csv(scratch("absent.csv")); }) ==
          mtoc::ErrorCode::Io);
  }
}

TEST_CASE("synthetic generation is deterministic and shaped as requested") {
  mtoc::SynthSpec spec;
  spec.tasks = 4;
  spec.per_task = 5;
  spec.dim = 6;
  spec.test_pos_per_task = 3;
  spec.test_neg_per_task = 7;
  const auto a = mtoc::synth_tasks(spec, 99);
  const auto b = mtoc::synth_tasks(spec, 99);
  CHECK(identical(a.train_features, b.train_features));
  CHECK(identical(a.test_features, b.test_features));
  CHECK(a.train_features.rows() == 4 * 5);
  CHECK(a.train_features.cols() == 6);
  CHECK(a.test_features.rows() == 4 * (3 + 7));
  CHECK(a.task_count == 4);
  // Every task has both labels in its test set.
  for (int t = 0; t < 4; ++t) {
    int pos = 0;
    int neg = 0;
    for (size_t i = 0; i < a.test_task_ids.size(); ++i) {
      if (a.test_task_ids[i] != t) continue;
      (a.test_is_target[i] ? pos : neg)++;
    }
    CHECK(pos == 3);
    CHECK(neg == 7);
  }
  const auto c = mtoc::synth_tasks(spec, 100);
  CHECK_FALSE(identical(a.train_features, c.train_features));
}

TEST_CASE("relatedness controls how close task means sit") {
  mtoc::SynthSpec spec;
  spec.tasks = 3;
  spec.per_task = 4;
  spec.dim = 3;
  spec.test_pos_per_task = 2;
  spec.test_neg_per_task = 2;
  spec.noise = 0.0;  // samples sit exactly on their task means

  SUBCASE("fully related tasks share one mean") {
    spec.relatedness = 1.0;
    const auto data = mtoc::synth_tasks(spec, 5);
    for (Index i = 1; i < data.train_features.rows(); ++i) {
      CHECK((data.train_features.row(i) - data.train_features.row(0)).norm() ==
            0.0);
    }
  }

  SUBCASE("unrelated tasks spread out more than related ones") {
    auto mean_spread = [&](double rho, uint64_t seed) {
      spec.relatedness = rho;
      const auto data = mtoc::synth_tasks(spec, seed);
      double total = 0.0;
      int pairs = 0;
      for (int s = 0; s < 3; ++s)
        for (int t = s + 1; t < 3; ++t) {
          total += (data.train_features.row(s * 4) -
                    data.train_features.row(t * 4))
                       .norm();
          ++pairs;
        }
      return total / pairs;
    };
    double related = 0.0;
    double unrelated = 0.0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      related += mean_spread(0.95, seed);
      unrelated += mean_spread(0.0, seed);
    }
    CHECK(unrelated > related);
  }
}

TEST_CASE("resplit reshuffles deterministically and conserves rows") {
  const auto base = small_synth();
  const auto again = mtoc::resplit(base, 17);
  const auto same = mtoc::resplit(base, 17);
  CHECK(identical(again.train_features, same.train_features));
  CHECK(identical(again.test_features, same.test_features));
  CHECK(again.train_features.rows() == base.train_features.rows());
  CHECK(again.test_features.rows() == base.test_features.rows());
  CHECK(again.train_task_ids == base.train_task_ids);
  CHECK(again.test_task_ids == base.test_task_ids);
  CHECK(again.test_is_target == base.test_is_target);

  // The pooled target rows per task are conserved as a multiset.
  auto pool = [](const DatasetBundle& d, int task) {
    std::vector<std::vector<double>> rows;
    for (Index i = 0; i < d.train_features.rows(); ++i) {
      if (d.train_task_ids[static_cast<size_t>(i)] != task) continue;
      std::vector<double> row(d.train_features.cols());
      for (Index c = 0; c < d.train_features.cols(); ++c)
        row[static_cast<size_t>(c)] = d.train_features(i, c);
      rows.push_back(std::move(row));
    }
    for (Index i = 0; i < d.test_features.rows(); ++i) {
      if (d.test_task_ids[static_cast<size_t>(i)] != task) continue;
      if (!d.test_is_target[static_cast<size_t>(i)]) continue;
      std::vector<double> row(d.test_features.cols());
      for (Index c = 0; c < d.test_features.cols(); ++c)
        row[static_cast<size_t>(c)] = d.test_features(i, c);
      rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
  };
  for (int t = 0; t < base.task_count; ++t) CHECK(pool(base, t) == pool(again, t));

  // A different seed actually moves something.
  const auto moved = mtoc::resplit(base, 18);
  CHECK_FALSE(identical(moved.train_features, again.train_features));
}

TEST_CASE("config parsing, typing, and fingerprints") {
  SUBCASE("comments, blank lines, and types") {
    const auto config = Config::from_string(
        "# a comment\n"
        "variant = ocksr-n\n"
        "\n"
        "gamma1 = 0.25   # trailing comment\n"
        "max_iters = 7\n"
        "backtracking = false\n"
        "sweep_gammas = 1, 0.1, 0.01\n");
    CHECK(config.get_string("variant") == "ocksr-n");
    CHECK(config.get_double("gamma1") == 0.25);
    CHECK(config.get_int("max_iters") == 7);
    CHECK(config.get_bool("backtracking", true) == false);
    CHECK(config.get_double_list("sweep_gammas") ==
          std::vector<double>{1.0, 0.1, 0.01});
    CHECK(config.get_double("gamma2", 0.5) == 0.5);  // fallback path
  }

  SUBCASE("duplicate keys are rejected") {
    CHECK(code_of([] {
            Config::from_string("gamma = 1\ngamma = 2\n");
          }) == mtoc::ErrorCode::Parse);
  }

  SUBCASE("lines without an equals sign are rejected") {
    CHECK(code_of([] { Config::from_string("gamma\n"); }) ==
          mtoc::ErrorCode::Parse);
  }

  SUBCASE("unknown keys fail validation") {
    const auto config = Config::from_string("gamma_typo = 1\n");
    CHECK(code_of([&] { config.validate_keys(); }) ==
          mtoc::ErrorCode::InvalidArgument);
  }

  SUBCASE("bad numeric and boolean values are parse errors") {
    const auto config = Config::from_string("gamma = abc\nproject_psd = maybe\n");
    CHECK(code_of([&] { config.get_double("gamma"); }) ==
          mtoc::ErrorCode::Parse);
    CHECK(code_of([&] { config.get_bool("project_psd", false); }) ==
          mtoc::ErrorCode::Parse);
  }

  SUBCASE("fingerprint ignores order and comments but not values") {
    const auto a = Config::from_string("gamma = 1\nvariant = ocksr\n");
    const auto b =
        Config::from_string("# hi\nvariant = ocksr\n\ngamma = 1\n");
    const auto c = Config::from_string("gamma = 2\nvariant = ocksr\n");
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint() != c.fingerprint());
  }

  SUBCASE("missing file is an io error") {
    CHECK(code_of([&] { Config::from_file(scratch("absent.conf")); }) ==
          mtoc::ErrorCode::Io);
  }
}

TEST_CASE("model persistence round-trips and detects damage") {
  const auto data = small_synth();
  const auto config = Config::from_string("gamma1 = 0.1\ngamma2 = 0.1\n");
  const auto model = mtoc::train_variant(data, config, Variant::OcksrN);
  const std::string path = scratch("model.mtoc");
  mtoc::save_model(path, model);

  SUBCASE("all fields round-trip bit-exactly") {
    const auto loaded = mtoc::load_model(path);
    CHECK(loaded.variant == model.variant);
    CHECK(loaded.sigma == model.sigma);
    CHECK(loaded.theta == model.theta);
    CHECK(loaded.config_fingerprint == model.config_fingerprint);
    CHECK(loaded.train_sse == model.train_sse);
    CHECK(identical(loaded.coeffs, model.coeffs));
    CHECK(identical(loaded.structure, model.structure));
    CHECK(identical(loaded.train_y, model.train_y));
    CHECK(identical(loaded.train_features, model.train_features));
    CHECK(loaded.task_ids == model.task_ids);
    for (Index i = 0; i < model.target_means.size(); ++i) {
      CHECK(loaded.target_means(i) == model.target_means(i));
    }

    // Reloaded predictions match in-memory predictions bit-for-bit.
    const Vector before =
        mtoc::predict_scores(model, data.test_features, data.test_task_ids);
    const Vector after =
        mtoc::predict_scores(loaded, data.test_features, data.test_task_ids);
    for (Index i = 0; i < before.size(); ++i) CHECK(before(i) == after(i));
  }

  SUBCASE("truncation is reported as corruption") {
    const std::string body = read_file(path);
    const std::string cut = scratch("model_cut.mtoc");
    write_file(cut, body.substr(0, body.size() / 2));
    CHECK(code_of([&] { mtoc::load_model(cut); }) ==
          mtoc::ErrorCode::CorruptModel);
  }

  SUBCASE("a flipped payload byte is reported as corruption") {
    std::string body = read_file(path);
    body[body.size() / 2] = static_cast<char>(body[body.size() / 2] ^ 0x40);
    const std::string bad = scratch("model_flip.mtoc");
    write_file(bad, body);
    CHECK(code_of([&] { mtoc::load_model(bad); }) ==
          mtoc::ErrorCode::CorruptModel);
  }

  SUBCASE("a future format version is a migration error naming both") {
    std::string body = read_file(path);
    // Format: 4 magic bytes, then a little-endian u16 version.
    body[4] = 2;
    body[5] = 0;
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
              static_cast<uInt>(body.size() - 4)));
    std::memcpy(body.data() + body.size() - 4, &crc, 4);
    const std::string bumped = scratch("model_v2.mtoc");
    write_file(bumped, body);
    try {
      mtoc::load_model(bumped);
      FAIL("expected version mismatch");
    } catch (const mtoc::Error& e) {
      CHECK(e.code() == mtoc::ErrorCode::VersionMismatch);
      const std::string what = e.what();
      CHECK(what.find("2") != std::string::npos);
      CHECK(what.find("1") != std::string::npos);
    }
  }

  SUBCASE("wrong magic is corruption") {
    std::string body = read_file(path);
    body[0] = 'X';
    const std::string bad = scratch("model_magic.mtoc");
    write_file(bad, body);
    CHECK(code_of([&] { mtoc::load_model(bad); }) ==
          mtoc::ErrorCode::CorruptModel);
  }

  SUBCASE("json export mentions the key fields") {
    const std::string jpath = scratch("model.json");
    mtoc::export_model_json(jpath, model);
    const auto parsed = nlohmann::json::parse(read_file(jpath));
    CHECK(parsed["variant"] == "ocksr-n");
    CHECK(parsed["sigma"].get<double>() == model.sigma);
    CHECK(parsed["coeffs"].size() == static_cast<size_t>(model.coeffs.rows()));
    CHECK(parsed["trace"]["converged"].is_boolean());
  }
}

TEST_CASE("training ignores the test partition entirely") {
  const auto data = small_synth();
  auto poisoned = data;
  poisoned.test_features.array() += 100.0;  // garbage test side
  const auto config = Config::from_string("gamma = 0.1\n");
  const auto clean_model = mtoc::train_variant(data, config, Variant::COcksr);
  const auto poisoned_model =
      mtoc::train_variant(poisoned, config, Variant::COcksr);
  CHECK(identical(clean_model.coeffs, poisoned_model.coeffs));
  CHECK(clean_model.sigma == poisoned_model.sigma);
  const Matrix probe = Matrix::Random(4, data.test_features.cols());
  CHECK(identical(mtoc::predict_responses(clean_model, probe),
                  mtoc::predict_responses(poisoned_model, probe)));
}

TEST_CASE("evaluation agrees with a brute-force pairwise AUC") {
  const auto data = small_synth();
  const auto config = Config::from_string("gamma = 0.1\n");
  for (const Variant variant : {Variant::Ocksr, Variant::COcksr}) {
    const auto model = mtoc::train_variant(data, config, variant);
    const auto eval = mtoc::evaluate_model(model, data);
    REQUIRE(eval.per_task_auc.size() == 3);
    const Vector scores =
        mtoc::predict_scores(model, data.test_features, data.test_task_ids);
    double mean = 0.0;
    for (int t = 0; t < 3; ++t) {
      std::vector<double> task_scores;
      std::vector<bool> task_labels;
      for (Index i = 0; i < scores.size(); ++i) {
        if (data.test_task_ids[static_cast<size_t>(i)] != t) continue;
        task_scores.push_back(scores(i));
        task_labels.push_back(
            data.test_is_target[static_cast<size_t>(i)] != 0);
      }
      const double want = oracle::brute_force_auc(task_scores, task_labels);
      CHECK(eval.per_task_auc[static_cast<size_t>(t)] ==
            doctest::Approx(want).epsilon(1e-12));
      mean += want;
    }
    CHECK(eval.mean_auc == doctest::Approx(mean / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("experiment runs are deterministic and worker-count invariant") {
  const auto config = Config::from_string(
      "variants = ocksr, c-ocksr, ocksr-n\n"
      "gamma = 0.1\n"
      "gamma1 = 0.1\n"
      "gamma2 = 0.1\n"
      "max_iters = 30\n"
      "repetitions = 3\n"
      "synth_tasks = 3\n"
      "synth_per_task = 6\n"
      "synth_dim = 3\n"
      "synth_test_pos = 4\n"
      "synth_test_neg = 6\n");
  const auto serial = mtoc::run_experiment(config, 11, 1);
  const auto threaded = mtoc::run_experiment(config, 11, 4);
  const auto repeat = mtoc::run_experiment(config, 11, 1);
  REQUIRE(serial.rows.size() == 3 * 3 * 3);  // variants x tasks x repetitions
  REQUIRE(threaded.rows.size() == serial.rows.size());
  for (size_t i = 0; i < serial.rows.size(); ++i) {
    CHECK(serial.rows[i].variant == threaded.rows[i].variant);
    CHECK(serial.rows[i].task == threaded.rows[i].task);
    CHECK(serial.rows[i].repetition == threaded.rows[i].repetition);
    CHECK(serial.rows[i].auc == threaded.rows[i].auc);
    CHECK(serial.rows[i].auc == repeat.rows[i].auc);
  }
  // Aggregate means equal the arithmetic mean of the stored rows.
  for (const char* name : {"ocksr", "c-ocksr", "ocksr-n"}) {
    double total = 0.0;
    int count = 0;
    for (const auto& row : serial.rows) {
      if (row.variant != name || std::isnan(row.auc)) continue;
      total += row.auc;
      ++count;
    }
    CHECK(mtoc::mean_auc(serial, name) ==
          doctest::Approx(total / count).epsilon(1e-12));
  }
}

TEST_CASE("a separable single task earns a perfect score") {
  const std::string path = scratch("separable.csv");
  write_file(path,
             "f0,task,split,label\n"
             "0.0,0,train,\n0.1,0,train,\n-0.1,0,train,\n"
             "0.05,0,test,target\n-0.02,0,test,target\n"
             "4.0,0,test,nontarget\n5.0,0,test,nontarget\n");
  auto config = Config::from_string("variant = ocksr\ngamma = 0.01\n");
  config.set("data", path);
  const auto table = mtoc::run_experiment(config, 1, 1);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0].auc == 1.0);
}

TEST_CASE("a failing repetition is recorded without sinking the run") {
  // Constant features break the similarity-layer initialization but leave
  // the plain baseline trainable.
  const std::string path = scratch("degenerate.csv");
  std::string text = "f0,task,split,label\n";
  for (int i = 0; i < 4; ++i) text += "1.0,0,train,\n";
  text += "1.0,0,test,target\n1.0,0,test,target\n";
  text += "1.0,0,test,nontarget\n1.0,0,test,nontarget\n";
  write_file(path, text);
  auto config = Config::from_string(
      "variants = ocksr, ocksr-n\nsigma = 1\ngamma = 0.1\n"
      "gamma1 = 0.1\ngamma2 = 0.1\n");
  config.set("data", path);
  const auto table = mtoc::run_experiment(config, 1, 1);
  REQUIRE(table.rows.size() == 2);
  bool saw_failure = false;
  for (const auto& run : table.runs) {
    if (run.variant != "ocksr-n") continue;
    CHECK(run.failed);
    CHECK(!run.error.empty());
    saw_failure = true;
  }
  CHECK(saw_failure);
  for (const auto& row : table.rows) {
    if (row.variant == "ocksr-n") CHECK(std::isnan(row.auc));
    if (row.variant == "ocksr") CHECK(!std::isnan(row.auc));
  }
}

TEST_CASE("result table exports") {
  const auto config = Config::from_string(
      "variants = ocksr, ocksr-ns\n"
      "gamma = 0.1\ngamma1 = 0.1\ngamma2 = 0.05\ngamma3 = 0.05\n"
      "max_iters = 20\n"
      "synth_tasks = 2\nsynth_per_task = 5\nsynth_dim = 3\n"
      "synth_test_pos = 3\nsynth_test_neg = 4\n");
  const auto table = mtoc::run_experiment(config, 5, 1);

  SUBCASE("csv uses the fixed header and one line per row") {
    const std::string path = scratch("results.csv");
    mtoc::write_results_csv(path, table);
    const std::string text = read_file(path);
    CHECK(text.rfind("variant,task,repetition,auc\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') ==
          static_cast<long>(table.rows.size()) + 1);
  }

  SUBCASE("trace sidecar carries run records with traces") {
    const std::string path = scratch("traces.json");
    mtoc::write_traces_json(path, table);
    const auto parsed = nlohmann::json::parse(read_file(path));
    REQUIRE(parsed.is_array());
    REQUIRE(parsed.size() == table.runs.size());
    bool saw_sparsity = false;
    for (const auto& run : parsed) {
      CHECK(run.contains("variant"));
      CHECK(run.contains("objective"));
      CHECK(run.contains("sigma"));
      CHECK(run.contains("mean_auc"));
      CHECK(run.contains("converged"));
      if (run.contains("nonzero_fraction")) {
        saw_sparsity = true;
        CHECK(run["variant"] == "ocksr-ns");
      }
    }
    CHECK(saw_sparsity);
  }

  SUBCASE("model directory captures a loadable model per run") {
    const fs::path dir = scratch_dir() / "models";
    fs::create_directories(dir);
    const auto with_models = mtoc::run_experiment(config, 5, 1, dir.string());
    CHECK(with_models.rows.size() == table.rows.size());
    const auto reloaded =
        mtoc::load_model((dir / "model-ocksr-rep0.mtoc").string());
    CHECK(reloaded.variant == Variant::Ocksr);
    const auto sparse_model =
        mtoc::load_model((dir / "model-ocksr-ns-rep0.mtoc").string());
    CHECK(sparse_model.variant == Variant::OcksrNs);
  }
}

TEST_CASE("regularization sweep grid semantics") {
  const auto config = Config::from_string(
      "variants = ocksr, c-ocksr\n"
      "gamma = 1\n"
      "repetitions = 2\n"
      "synth_tasks = 2\nsynth_per_task = 5\nsynth_dim = 3\n"
      "synth_test_pos = 3\nsynth_test_neg = 4\n");

  SUBCASE("seven-point grid over two variants yields fourteen rows") {
    const auto sweep =
        mtoc::sweep_regularization(config, mtoc::default_sweep_grid(), 7, 2);
    CHECK(sweep.rows.size() == 14);
    CHECK(mtoc::default_sweep_grid().size() == 7);
  }

  SUBCASE("a singleton grid reproduces the plain experiment") {
    const auto sweep = mtoc::sweep_regularization(config, {1.0}, 7, 1);
    const auto plain = mtoc::run_experiment(config, 7, 1);
    REQUIRE(sweep.rows.size() == 2);
    for (const auto& row : sweep.rows) {
      CHECK(row.gamma == 1.0);
      CHECK(row.auc ==
            doctest::Approx(mtoc::mean_auc(plain, row.variant)).epsilon(1e-12));
    }
    // Detail rows are tagged with their grid point.
    bool saw_tag = false;
    for (const auto& row : sweep.detail.rows) {
      CHECK(row.variant.find('@') != std::string::npos);
      if (row.variant == "ocksr@1") saw_tag = true;
    }
    CHECK(saw_tag);
  }

  SUBCASE("sweep csv header") {
    const auto sweep = mtoc::sweep_regularization(config, {1.0, 0.1}, 7, 1);
    const std::string path = scratch("sweep.csv");
    mtoc::write_sweep_csv(path, sweep.rows);
    CHECK(read_file(path).rfind("variant,gamma,auc,sse\n", 0) == 0);
  }
}

TEST_CASE("cross-validation selection") {
  const auto config = Config::from_string(
      "variant = c-ocksr\n"
      "synth_tasks = 3\nsynth_per_task = 10\nsynth_dim = 3\n"
      "synth_test_pos = 3\nsynth_test_neg = 4\n");
  const auto data = mtoc::dataset_from_config(config, 21);
  const std::vector<double> grid = {1.0, 0.1, 0.01};

  SUBCASE("deterministic and structurally sound") {
    const auto a =
        mtoc::cv_select_gamma(config, Variant::COcksr, data, grid, 5, 3);
    const auto b =
        mtoc::cv_select_gamma(config, Variant::COcksr, data, grid, 5, 3);
    REQUIRE(a.curve.size() == 3);
    CHECK(a.best_gamma == b.best_gamma);
    for (size_t i = 0; i < a.curve.size(); ++i) {
      CHECK(a.curve[i].gamma == grid[i]);
      CHECK(a.curve[i].heldout_sse == b.curve[i].heldout_sse);
      CHECK(a.curve[i].heldout_sse >= 0.0);
    }
    // The winner is the argmin of the curve.
    double best = a.curve[0].heldout_sse;
    double best_gamma = a.curve[0].gamma;
    for (const auto& point : a.curve) {
      if (point.heldout_sse < best) {
        best = point.heldout_sse;
        best_gamma = point.gamma;
      }
    }
    CHECK(a.best_gamma == best_gamma);
  }

  SUBCASE("parameter validation") {
    CHECK(code_of([&] {
            mtoc::cv_select_gamma(config, Variant::COcksr, data, grid, 1, 3);
          }) == mtoc::ErrorCode::InvalidArgument);
    CHECK(code_of([&] {
            mtoc::cv_select_gamma(config, Variant::COcksr, data, {}, 5, 3);
          }) == mtoc::ErrorCode::InvalidArgument);
  }

  SUBCASE("selection runner covers every variant and writes csv") {
    auto multi = Config::from_string(
        "variants = ocksr, c-ocksr\n"
        "sweep_gammas = 1, 0.1\n"
        "cv_folds = 3\n"
        "synth_tasks = 2\nsynth_per_task = 6\nsynth_dim = 3\n"
        "synth_test_pos = 3\nsynth_test_neg = 4\n");
    const auto selections = mtoc::run_cv_selection(multi, 9);
    REQUIRE(selections.size() == 2);
    CHECK(selections[0].variant == "ocksr");
    CHECK(selections[1].variant == "c-ocksr");
    const std::string path = scratch("cv.csv");
    mtoc::write_cv_csv(path, selections);
    const std::string text = read_file(path);
    CHECK(text.rfind("variant,gamma,heldout_sse,selected\n", 0) == 0);
    CHECK(text.find(",1\n") != std::string::npos);  // a selected row exists
  }
}

TEST_CASE("gradient checks pass their stated tolerances") {
  using mtoc::GradCheckTarget;
  SUBCASE("sized instance matches the documented bound") {
    const auto report = mtoc::gradient_check_sized(
        GradCheckTarget::NonlinearCoeffs, 5, 10, 3, 77, 1e-6);
    CHECK(report.max_rel_error < 1e-5);
    CHECK(report.cases.size() == 5);
  }
  SUBCASE("every target under the default driver") {
    for (const auto target :
         {GradCheckTarget::LinearStructure, GradCheckTarget::NonlinearCoeffs,
          GradCheckTarget::NonlinearWidth, GradCheckTarget::SparseCoeffs}) {
      const auto report = mtoc::gradient_check(target, 5, 123);
      CHECK(report.max_rel_error < 1e-4);
      CHECK(report.requested == 5);
      CHECK(report.mean_rel_error <= report.max_rel_error);
    }
  }
  SUBCASE("target names round-trip") {
    CHECK(mtoc::parse_gradcheck_target("linear-b") ==
          GradCheckTarget::LinearStructure);
    CHECK(std::string(mtoc::gradcheck_target_name(
              GradCheckTarget::SparseCoeffs)) == "sparse-a");
    CHECK_THROWS_AS(mtoc::parse_gradcheck_target("bogus"), mtoc::Error);
  }
}

TEST_CASE("variant names round-trip") {
  for (const Variant v : {Variant::Ocksr, Variant::COcksr, Variant::OcksrL,
                          Variant::OcksrN, Variant::OcksrNs}) {
    CHECK(mtoc::parse_variant(mtoc::variant_name(v)) == v);
  }
  CHECK_THROWS_AS(mtoc::parse_variant("nope"), mtoc::Error);
}
