#include "lrgnn/errors.hpp"
#include "lrgnn/hpo.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

using namespace lrgnn;

namespace {

ModelConfig base_config(bool has_pos = false) {
  ModelConfig c;
  c.node_feature_dim = 3;
  c.edge_feature_dim = 2;
  c.lpe_dim = 2;
  c.has_pos = has_pos;
  return c;
}

TrialRecord trial(std::size_t index, double val, bool failed = false) {
  TrialRecord t;
  t.index = index;
  t.val_loss = val;
  t.failed = failed;
  t.failure = failed ? "diverged" : "";
  return t;
}

} // namespace

class SpaceBranch : public ::testing::TestWithParam<std::tuple<bool, bool, bool>> {};

TEST_P(SpaceBranch, SampledConfigsObeyConstraints) {
  const auto [has_pos, attention, encodings] = GetParam();
  const SearchSpace space = SearchSpace::standard(has_pos, attention, encodings);
  ASSERT_NO_THROW(space.validate());
  Rng rng(1);
  std::set<MpnnKind> kinds;
  for (int i = 0; i < 2000; ++i) {
    const ModelConfig c = sample_config(space, base_config(has_pos), rng);
    ASSERT_EQ(support::search_space_violation(c, has_pos, attention, encodings), "");
    ASSERT_EQ(space.violation(c), "");
    ASSERT_NO_THROW(c.validate());
    kinds.insert(c.mpnn_kind);
  }
  EXPECT_EQ(kinds.size(), has_pos ? 3u : 2u);
}

INSTANTIATE_TEST_SUITE_P(Branches, SpaceBranch,
                         ::testing::Combine(::testing::Bool(), ::testing::Bool(), ::testing::Bool()));

TEST(SearchSpace, AttentionWithEncodingsGrid) {
  const SearchSpace s = SearchSpace::standard(false, true, true);
  EXPECT_EQ(s.hidden_dim, (std::vector<std::size_t>{16, 24, 32, 40, 48, 56, 64}));
  EXPECT_EQ(s.heads, (std::vector<std::size_t>{2, 4, 8}));
}

TEST(SearchSpace, AttentionOffForcesZeroHeads) {
  SearchSpace s = SearchSpace::standard(false, false, true);
  EXPECT_EQ(s.heads, (std::vector<std::size_t>{0}));
  s.heads = {0, 2};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(SearchSpace, GeometricRejectedWithoutPositions) {
  SearchSpace s = SearchSpace::standard(false, false, false);
  s.kinds.push_back(MpnnKind::Geometric);
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(SearchSpace, NoFeasiblePairRejected) {
  SearchSpace s = SearchSpace::standard(false, true, false);
  s.hidden_dim = {9, 15};
  s.heads = {2, 4};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(SearchSpace, JsonRoundTripAndRangeForm) {
  const SearchSpace s = SearchSpace::standard(true, true, false);
  nlohmann::json j = s;
  EXPECT_EQ(j.get<SearchSpace>(), s);
  nlohmann::json r = SearchSpace::standard(false, false, false);
  r["num_conv_layers"] = {{"range", {2, 4}}};
  EXPECT_EQ(r.get<SearchSpace>().num_conv_layers, (std::vector<std::size_t>{2, 3, 4}));
}

TEST(SelectBest, ArgminWithLowerIndexTieBreak) {
  std::vector<TrialRecord> t{trial(0, 0.5), trial(1, 0.2), trial(2, 0.2), trial(3, 0.9)};
  EXPECT_EQ(t[select_best(t)].index, 1u);
  std::reverse(t.begin(), t.end());
  EXPECT_EQ(t[select_best(t)].index, 1u);
}

TEST(SelectBest, SoleTrial) {
  const std::vector<TrialRecord> t{trial(0, 3.0)};
  EXPECT_EQ(select_best(t), 0u);
}

TEST(SelectBest, InjectedZeroLossWinsInAnyOrder) {
  Rng rng(2);
  std::vector<TrialRecord> t;
  for (std::size_t i = 0; i < 12; ++i) {
    t.push_back(trial(i, 0.1 + uniform01(rng)));
  }
  t.push_back(trial(12, 0.0));
  for (int r = 0; r < 20; ++r) {
    shuffle(std::span<TrialRecord>(t), rng);
    EXPECT_EQ(t[select_best(t)].index, 12u);
  }
}

TEST(SelectBest, FailedTrialsSkippedAndAllFailedThrows) {
  std::vector<TrialRecord> t{trial(0, 0.0, true), trial(1, 0.4)};
  EXPECT_EQ(select_best(t), 1u);
  t[1].failed = true;
  EXPECT_THROW(select_best(t), TrainingError);
}

TEST(TrialStore, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "lrgnn_trials.jsonl";
  std::vector<TrialRecord> t{trial(1, 0.25), trial(0, 0.5, true)};
  t[0].config = base_config();
  t[0].test.mse = 0.3;
  t[0].test.count = 4;
  t[0].seed = 99;
  write_trial_store(path, t);
  const auto back = read_trial_store(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].index, 0u);
  EXPECT_TRUE(back[0].failed);
  EXPECT_EQ(back[1].config, t[0].config);
  EXPECT_EQ(back[1].seed, 99u);
  EXPECT_EQ(back[1].val_loss, 0.25);
  EXPECT_EQ(*back[1].test.mse, 0.3);
  std::filesystem::remove(path);
}

TEST(RunHpo, FixedSeedReplaysIdentically) {
  Rng rng(3);
  std::vector<Sample> data;
  for (int i = 0; i < 12; ++i) {
    data.push_back(support::random_sample(rng, {.min_nodes = 3, .max_nodes = 6}, 2));
  }
  const std::span<const Sample> all(data);
  SearchSpace space = SearchSpace::standard(false, false, false);
  space.num_conv_layers = {1, 2};
  space.hidden_dim = {4, 6, 8};
  HpoSettings settings;
  settings.budget = 4;
  settings.seed = 5;
  settings.train.hpo_epochs = 2;
  settings.train.epochs = 3;
  settings.train.batch_size = 4;
  const HpoResult a = run_hpo(space, base_config(), settings, all.subspan(0, 8), all.subspan(8, 2), all.subspan(10, 2));
  settings.workers = 2;
  const HpoResult b = run_hpo(space, base_config(), settings, all.subspan(0, 8), all.subspan(8, 2), all.subspan(10, 2));
  ASSERT_EQ(a.trials.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(trial_to_json(a.trials[i]), trial_to_json(b.trials[i]));
  }
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.best, select_best(a.trials));
  EXPECT_TRUE(a.final_model == b.final_model);
}
