/**
 * Copyright 2026 The SplitForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <random>

#include "splitforge/arch.hpp"
#include "splitforge/cost.hpp"
#include "splitforge/error.hpp"

namespace splitforge {
namespace {

using nlohmann::json;

json MinimalDoc() {
  return json::parse(R"({
    "name": "minimal",
    "input_shape": [3, 8, 8],
    "blocks": [{"layers": [{"type": "conv", "out_channels": 4}, {"type": "relu"}],
                "pool": {"mode": "max", "window": 2}}],
    "classifier": {"layers": [{"type": "dense", "out_features": 2}]}
  })");
}

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

bool HasIssue(const ValidationReport& r, const std::string& needle) {
  for (const auto& i : r.issues)
    if (i.message.find(needle) != std::string::npos) return true;
  return false;
}

TEST(ArchParse, MinimalDocumentHasOneBlock) {
  const Architecture a = ParseArchitecture(MinimalDoc());
  ASSERT_EQ(a.blocks.size(), 1u);
  EXPECT_EQ(a.blocks[0].layers.size(), 2u);
  EXPECT_EQ(a.blocks[0].layers[0].id, "b0.l0");
  EXPECT_EQ(a.blocks[0].layers[1].inputs, std::vector<int>{0});
  EXPECT_EQ(a.blocks[0].pool->stride, (Hw{2, 2}));
  EXPECT_EQ(InferShapes(a).classes, 2);
}

TEST(ArchParse, ZeroOutChannelsIsParseError) {
  json d = MinimalDoc();
  d["blocks"][0]["layers"][0]["out_channels"] = 0;
  try {
    ParseArchitecture(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("blocks[0].layers[0].out_channels"), std::string::npos);
  }
}

TEST(ArchParse, UnknownFieldRejected) {
  json d = MinimalDoc();
  d["blocks"][0]["residual"] = json::object();
  EXPECT_EQ(CodeOf([&] { ParseArchitecture(d); }), ErrorCode::kParse);
  d = MinimalDoc();
  d["extra"] = 1;
  EXPECT_EQ(CodeOf([&] { ParseArchitecture(d); }), ErrorCode::kParse);
}

TEST(ArchParse, MalformedJson) {
  EXPECT_EQ(CodeOf([] { ParseArchitectureText("{not json"); }), ErrorCode::kParse);
}

TEST(ArchParse, BlockWithoutPoolOrMarkerRejected) {
  json d = MinimalDoc();
  d["blocks"][0].erase("pool");
  EXPECT_EQ(CodeOf([&] { ParseArchitecture(d); }), ErrorCode::kParse);
  d["blocks"][0]["pool_free"] = true;
  EXPECT_NO_THROW(ParseArchitecture(d));
}

TEST(ArchParse, ShapeMismatchIsValidationError) {
  json d = MinimalDoc();
  d["blocks"][0]["layers"].push_back({{"type", "residual_add"}, {"inputs", {1, -1}}});
  EXPECT_EQ(CodeOf([&] { ParseArchitecture(d); }), ErrorCode::kValidation);
}

TEST(ArchShapes, SamePaddingKeepsSpatialSize) {
  const Architecture a = TwoLayerDemo(3, 64, 64);
  const ShapeTable t = InferShapes(a);
  EXPECT_EQ(t.blocks[0].layers[0].out, (Shape3{64, 32, 32}));
  EXPECT_EQ(t.blocks[0].output, (Shape3{64, 16, 16}));
  EXPECT_EQ(t.classifier_input, 64 * 16 * 16);
}

TEST(ArchShapes, PoolFormula) {
  EXPECT_EQ(PoolOutput(Shape3{64, 32, 32}, PoolSpec{PoolMode::kMax, {2, 2}, {2, 2}}),
            (Shape3{64, 16, 16}));
  EXPECT_EQ(PoolOutput(Shape3{1, 7, 7}, PoolSpec{PoolMode::kAvg, {3, 3}, {2, 2}}), (Shape3{1, 3, 3}));
}

TEST(ArchShapes, FivePoolsReachOneByOne) {
  const ShapeTable t = InferShapes(Vgg16Cifar());
  ASSERT_EQ(t.blocks.size(), 5u);
  EXPECT_EQ(t.blocks.back().output, (Shape3{512, 1, 1}));
}

TEST(ArchValidate, BuiltinsAreClean) {
  for (const auto& b : BuiltinArchitectures()) {
    const ValidationReport r = Validate(b.arch);
    EXPECT_TRUE(r.ok()) << b.name << ": " << r.Summary();
  }
}

TEST(ArchValidate, ShortcutShapeMismatch) {
  Architecture a = TwoLayerDemo(3, 8, 16);
  Layer add{"b0.add", ResidualAddParams{}, {3, 1}};
  a.blocks[0].layers.push_back(add);
  EXPECT_TRUE(HasIssue(Validate(a), "shortcut shape mismatch"));
}

TEST(ArchValidate, GroupsMustDivideChannels) {
  Architecture a = TwoLayerDemo(3, 64, 64);
  a.blocks[0].layers[2].as<ConvParams>().groups = 3;
  const ValidationReport r = Validate(a);
  EXPECT_TRUE(HasIssue(r, "groups must divide channels")) << r.Summary();
}

TEST(ArchValidate, EmptyArchitecture) {
  Architecture a;
  a.input_shape = {3, 8, 8};
  EXPECT_TRUE(HasIssue(Validate(a), "no blocks"));
}

TEST(ArchValidate, UnusedLayerReported) {
  Architecture a = TwoLayerDemo(3, 8, 8);
  a.blocks[0].layers[3].inputs = {1};  // conv1 output now dangles
  EXPECT_FALSE(Validate(a).ok());
}

TEST(ArchBuiltins, Vgg16HasFivePoolBlocks) {
  const Architecture a = Vgg16Cifar();
  ASSERT_EQ(a.blocks.size(), 5u);
  int pools = 0;
  for (const auto& b : a.blocks) pools += b.pool.has_value();
  EXPECT_EQ(pools, 5);
  EXPECT_EQ(CountConvLayers(a), 13);
}

TEST(ArchBuiltins, Vgg16ConvWeightsByHand) {
  const int plan[13][2] = {{3, 64},    {64, 64},   {64, 128},  {128, 128}, {128, 256},
                           {256, 256}, {256, 256}, {256, 512}, {512, 512}, {512, 512},
                           {512, 512}, {512, 512}, {512, 512}};
  int64_t expect = 0;
  for (const auto& p : plan) expect += int64_t{p[0]} * p[1] * 9;
  EXPECT_EQ(CountCosts(Vgg16Cifar()).totals.conv_params, expect);
}

TEST(ArchBuiltins, TwoLayerDemoCounts) {
  const Architecture a = TwoLayerDemo(3, 64, 64);
  EXPECT_EQ(CountConvLayers(a), 2);
  EXPECT_EQ(CountCosts(a).totals.conv_params, 38592);
  EXPECT_EQ(BuiltinByName("two_layer_demo(3,64,64)"), a);
}

TEST(ArchBuiltins, Resnet18HasFiveBlocks) {
  const Architecture a = Resnet18Cifar();
  EXPECT_EQ(a.blocks.size(), 5u);
  EXPECT_EQ(CountConvLayers(a), 1 + 16 + 3);
  EXPECT_EQ(InferShapes(a).blocks.back().output, (Shape3{512, 1, 1}));
}

TEST(ArchBuiltins, UnknownNameIsError) {
  EXPECT_THROW(BuiltinByName("alexnet"), Error);
}

// Random configuration generator. Produces a document using the short forms
// the parser accepts and, independently, the fully spelled-out form the
// serializer must emit.
struct GeneratedDoc {
  json doc;
  json normalized;
};

GeneratedDoc Generate(std::mt19937& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto coin = [&] { return pick(0, 1) == 1; };
  GeneratedDoc g;
  int c = pick(1, 4), h = 16;
  const std::string name = "gen" + std::to_string(pick(0, 9999));
  g.doc = {{"name", name}, {"input_shape", {c, h, h}}};
  g.normalized = g.doc;
  json blocks = json::array(), nblocks = json::array();
  const int nb = pick(1, 3);
  for (int b = 0; b < nb; ++b) {
    json layers = json::array(), nlayers = json::array();
    std::vector<int> channels;
    const int block_in = c;
    const int nl = pick(1, 5);
    for (int k = 0; k < nl; ++k) {
      json l, n;
      const std::string id = "L" + std::to_string(b) + "_" + std::to_string(k);
      const bool named = coin();
      n["id"] = named ? id : "b" + std::to_string(b) + ".l" + std::to_string(k);
      if (named) l["id"] = id;
      int kind = pick(0, 4);
      if (k == 0 && kind >= 2) kind = 0;
      if (kind == 3 && (c % 2 != 0)) kind = 1;
      const bool residual_ok = c == block_in && k > 0;
      if (kind == 4 && !residual_ok) kind = 1;
      const int prev = k - 1;
      if (kind == 0) {
        const int out = 2 * pick(1, 4);
        const int ks = coin() ? 3 : 1;
        l["type"] = n["type"] = "conv";
        l["out_channels"] = n["out_channels"] = out;
        if (coin()) l["kernel"] = ks; else l["kernel"] = {ks, ks};
        if (ks == 3 && coin()) l["padding"] = "same";
        else if (coin()) l["padding"] = ks / 2;
        n["kernel"] = {ks, ks};
        n["stride"] = {1, 1};
        n["padding"] = {ks / 2, ks / 2};
        n["groups"] = 1;
        const bool bias = coin();
        if (bias || coin()) l["bias"] = bias;
        n["bias"] = bias;
        c = out;
      } else if (kind == 1 || kind == 2) {
        l["type"] = n["type"] = "relu";
      } else if (kind == 3) {
        l["type"] = n["type"] = "channel_slice";
        l["start"] = n["start"] = c / 2;
        l["length"] = n["length"] = c / 2;
        c = c / 2;
      } else {
        l["type"] = n["type"] = "residual_add";
        l["inputs"] = {prev, -1};
      }
      if (kind != 4 && coin()) l["inputs"] = {prev};
      n["inputs"] = kind == 4 ? json{prev, -1} : json{prev};
      channels.push_back(c);
      layers.push_back(l);
      nlayers.push_back(n);
    }
    json block = {{"layers", layers}}, nblock = {{"layers", nlayers}};
    if (h >= 4 && coin()) {
      const bool max = coin();
      json pool = {{"window", 2}};
      if (!max || coin()) pool["mode"] = max ? "max" : "avg";
      if (coin()) pool["stride"] = {2, 2};
      block["pool"] = pool;
      nblock["pool"] = {{"mode", max ? "max" : "avg"}, {"window", {2, 2}}, {"stride", {2, 2}}};
      h /= 2;
    } else {
      block["pool_free"] = nblock["pool_free"] = true;
    }
    blocks.push_back(block);
    nblocks.push_back(nblock);
  }
  g.doc["blocks"] = blocks;
  g.normalized["blocks"] = nblocks;
  json cl = json::array(), ncl = json::array();
  const int hidden = pick(0, 1);
  for (int k = 0; k <= hidden; ++k) {
    const std::string id = "fc" + std::to_string(2 * k);
    cl.push_back({{"type", "dense"}, {"out_features", k == hidden ? 3 : 5}});
    ncl.push_back({{"type", "dense"}, {"id", id}, {"out_features", k == hidden ? 3 : 5}, {"bias", false}});
    if (k < hidden) {
      cl.push_back({{"type", "relu"}});
      ncl.push_back({{"type", "relu"}, {"id", "fc" + std::to_string(2 * k + 1)}});
    }
  }
  g.doc["classifier"] = {{"layers", cl}};
  g.normalized["classifier"] = {{"layers", ncl}};
  return g;
}

TEST(ArchRoundTrip, RandomDocumentsNormalize) {
  std::mt19937 rng(20260101);
  for (int t = 0; t < 50; ++t) {
    const GeneratedDoc g = Generate(rng);
    Architecture a;
    ASSERT_NO_THROW(a = ParseArchitecture(g.doc)) << g.doc.dump();
    EXPECT_EQ(SerializeArchitecture(a), g.normalized) << "doc: " << g.doc.dump()
                                                      << "\ngot: " << SerializeArchitecture(a).dump();
    EXPECT_EQ(ParseArchitectureText(SerializeArchitectureText(a)), a);
  }
}

TEST(ArchRoundTrip, BuiltinsRoundTrip) {
  for (const auto& b : BuiltinArchitectures())
    EXPECT_EQ(ParseArchitectureText(SerializeArchitectureText(b.arch)), b.arch) << b.name;
}

}  // namespace
}  // namespace splitforge
