// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "mona/checkpoint.hpp"

using namespace mona;

namespace {

std::vector<ParamGroup> trained_groups() {
  std::mt19937_64 rng(1);
  OptimizerConfig cfg;
  OptimizerConfig lite = cfg;
  lite.precision = Precision::bf16_streaming;
  std::vector<ParamGroup> g;
  g.emplace_back("a.weight", random_normal(3, 4, rng), ParamKind::matrix);
  g.emplace_back("b.weight", random_normal(2, 5, rng), ParamKind::matrix);
  g.emplace_back("a.bias", random_normal(4, 1, rng), ParamKind::vector);
  for (int k = 0; k < 3; ++k) {
    mona_step(g[0], random_normal(3, 4, rng), cfg);
    mona_lite_step(g[1], random_normal(2, 5, rng), lite);
    adamw_step(g[2], random_normal(4, 1, rng), AdamConfig{}, 0.01);
  }
  return g;
}

void expect_same(const ParamGroup& a, const ParamGroup& b) {
  EXPECT_EQ(a.name, b.name);
  EXPECT_EQ(a.kind, b.kind);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.state.step, b.state.step);
  EXPECT_EQ(a.state.momentum, b.state.momentum);
  EXPECT_EQ(a.state.accel, b.state.accel);
  EXPECT_EQ(a.state.prev_grad, b.state.prev_grad);
  EXPECT_EQ(a.state.grad_slot, b.state.grad_slot);
  EXPECT_EQ(a.state.adam_m, b.state.adam_m);
  EXPECT_EQ(a.state.adam_v, b.state.adam_v);
  EXPECT_EQ(a.state.accel_bf16, b.state.accel_bf16);
  EXPECT_EQ(a.state.grad_slot_bf16, b.state.grad_slot_bf16);
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto groups = trained_groups();
  const std::string bytes = encode_checkpoint("{\"x\": 1}", groups);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config_text, "{\"x\": 1}");
  ASSERT_EQ(back.groups.size(), groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) expect_same(groups[i], back.groups[i]);
  EXPECT_EQ(encode_checkpoint(back.config_text, back.groups), bytes);
}

TEST(Checkpoint, ResumedTrainingMatchesUninterrupted) {
  std::mt19937_64 rng(2);
  OptimizerConfig cfg;
  ParamGroup live("w", random_normal(3, 3, rng), ParamKind::matrix);
  std::vector<Matrix> grads;
  for (int k = 0; k < 10; ++k) grads.push_back(random_normal(3, 3, rng));
  for (int k = 0; k < 5; ++k) mona_step(live, grads[k], cfg);
  std::vector<ParamGroup> saved{live};
  Checkpoint resumed = decode_checkpoint(encode_checkpoint("", saved));
  for (int k = 5; k < 10; ++k) {
    mona_step(live, grads[k], cfg);
    mona_step(resumed.groups[0], grads[k], cfg);
  }
  EXPECT_EQ(live.weights, resumed.groups[0].weights);
}

TEST(Checkpoint, FileRoundTripAndDescribe) {
  const auto groups = trained_groups();
  const auto path = std::filesystem::temp_directory_path() / "mona_ckpt_test.ckpt";
  save_checkpoint(path, "cfg", groups);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  for (std::size_t i = 0; i < groups.size(); ++i) expect_same(groups[i], back.groups[i]);
  const std::string text = describe_checkpoint(back);
  EXPECT_NE(text.find("a.weight/momentum"), std::string::npos);
  EXPECT_NE(text.find("b.weight/accel_bf16  bf16  2x5"), std::string::npos);
  EXPECT_NE(text.find("a.bias/adam_v"), std::string::npos);
}

TEST(Checkpoint, CorruptInputsAreRejected) {
  const std::string bytes = encode_checkpoint("c", trained_groups());
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), CheckpointError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), CheckpointError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), CheckpointError);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version), CheckpointError);
  EXPECT_THROW(decode_checkpoint(""), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ckpt"), CheckpointError);
}
