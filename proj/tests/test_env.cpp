#include <doctest.h>

#include "propa/env.hpp"
#include "test_support.hpp"

using namespace propa;

TEST_SUITE_BEGIN("env");

TEST_CASE("generate_instance encodes seed digits deterministically") {
  auto zero = generate_instance(0, 1);
  CHECK(zero.inputs == std::vector<int>{0});
  CHECK(zero.truth == 0);

  auto inst = generate_instance(314, 3);
  CHECK(inst.inputs == std::vector<int>{3, 1, 4});
  int expected = 0;
  for (int g : inst.inputs) expected += g;  // summation oracle
  CHECK(inst.truth == 8);
  CHECK(inst.truth == expected);

  auto nines = generate_instance(99999, 5);
  CHECK(nines.inputs == std::vector<int>(5, 9));
  CHECK(nines.truth == 45);

  auto a = generate_instance(4711, 4);
  auto b = generate_instance(4711, 4);
  CHECK(a.inputs == b.inputs);
  CHECK(a.truth == b.truth);

  CHECK_THROWS_AS(generate_instance(1, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_instance(1, 6), std::invalid_argument);
}

TEST_CASE("verify_answer checks only the final answer") {
  auto inst = generate_instance(314, 3);
  Chain good = teacher_trace(inst);
  CHECK(verify_answer(good) == 1);

  Chain bad = good;
  bad.steps.back() = StepToken::answer(7);
  CHECK(verify_answer(bad) == 0);

  Chain zero{generate_instance(0, 1), {StepToken::answer(0)}};
  CHECK(verify_answer(zero) == 1);

  Chain open{inst, {StepToken::reason(3)}};
  CHECK_THROWS_AS(verify_answer(open), NotTerminalError);
}

TEST_CASE("teacher_trace emits prefix sums then the total") {
  auto inst = generate_instance(314, 3);
  Chain trace = teacher_trace(inst);
  REQUIRE(trace.length() == 4);
  CHECK(trace.steps[0] == StepToken::reason(3));
  CHECK(trace.steps[1] == StepToken::reason(4));
  CHECK(trace.steps[2] == StepToken::reason(8));
  CHECK(trace.steps[3] == StepToken::answer(8));

  Chain seven = teacher_trace(generate_instance(7, 1));
  CHECK(seven.steps == std::vector<StepToken>{StepToken::reason(7), StepToken::answer(7)});

  Chain zeros = teacher_trace(generate_instance(0, 2));
  CHECK(zeros.steps == std::vector<StepToken>{StepToken::reason(0), StepToken::reason(0),
                                              StepToken::answer(0)});
}

TEST_CASE("teacher traces verify on every instance up to d=3") {
  for (const auto& inst : testing::exhaustive_instances(3))
    REQUIRE(verify_answer(teacher_trace(inst)) == 1);
}

TEST_CASE("featurize matches the normative map") {
  auto inst = generate_instance(314, 3);

  Chain empty{inst, {}};
  auto idx = feature_indices(empty);
  CHECK(idx[0] == 0);            // empty-chain sentinel slot
  CHECK(idx[1] == 92);           // position 0
  CHECK(idx[2] == 100 + 3);      // first digit 3

  Chain one{inst, {StepToken::reason(3)}};
  idx = feature_indices(one);
  CHECK(idx[0] == StepToken::reason(3).id);
  CHECK(idx[1] == 92 + 1);
  CHECK(idx[2] == 100 + 1);      // next digit 1

  Chain term = teacher_trace(inst);
  idx = feature_indices(term);
  CHECK(idx[0] == StepToken::answer(8).id);
  CHECK(idx[2] == 100 + 10);     // all digits consumed -> sentinel
}

TEST_CASE("featurize always sets exactly three ones") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = generate_instance(static_cast<std::int64_t>(rng.bounded(100000)),
                                  1 + static_cast<int>(rng.bounded(5)));
    Chain chain{inst, {}};
    int len = static_cast<int>(rng.bounded(8));
    for (int i = 0; i < len; ++i)
      chain.steps.push_back(StepToken::reason(static_cast<int>(rng.bounded(46))));
    auto phi = featurize(chain);
    REQUIRE(phi.size() == 111u);
    int ones = 0, others = 0;
    for (double v : phi) {
      if (v == 1.0) ++ones;
      else if (v != 0.0) ++others;
    }
    CHECK(ones == 3);
    CHECK(others == 0);
  }
}

TEST_CASE("featurize rejects over-length chains") {
  auto inst = generate_instance(5, 1);
  Chain chain{inst, {}};
  for (int i = 0; i < 9; ++i) chain.steps.push_back(StepToken::reason(1));
  CHECK_THROWS_AS(featurize(chain), std::invalid_argument);
}

TEST_CASE("chain append enforces invariants") {
  auto inst = generate_instance(5, 1);
  Chain chain{inst, {}};
  chain.append(StepToken::reason(5), 8);
  chain.append(StepToken::answer(5), 8);
  CHECK_THROWS_AS(chain.append(StepToken::reason(1), 8), std::invalid_argument);

  Chain full{inst, {}};
  for (int i = 0; i < 8; ++i) full.append(StepToken::reason(1), 8);
  CHECK_THROWS_AS(full.append(StepToken::reason(1), 8), std::invalid_argument);
}

TEST_CASE("instance files round-trip") {
  auto dir = std::filesystem::temp_directory_path() / "propa_env_test";
  std::filesystem::create_directories(dir);
  std::vector<ProblemInstance> set = {generate_instance(314, 3), generate_instance(0, 1),
                                      generate_instance(99999, 5)};
  save_instances(dir / "set.txt", set);
  auto loaded = load_instances(dir / "set.txt");
  REQUIRE(loaded.size() == set.size());
  for (size_t i = 0; i < set.size(); ++i) {
    CHECK(loaded[i].instance_id == set[i].instance_id);
    CHECK(loaded[i].inputs == set[i].inputs);
    CHECK(loaded[i].truth == set[i].truth);
  }
}

TEST_SUITE_END();
