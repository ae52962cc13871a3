#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "sparsegate/errors.hpp"
#include "sparsegate/model.hpp"
#include "sparsegate/model_io.hpp"
#include "test_support.hpp"

namespace sg = sparsegate;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() /
                   ("sparsegate_model_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
  fs::create_directories(dir);
  return dir;
}

std::vector<std::byte> bytes_of(std::initializer_list<int> values) {
  std::vector<std::byte> out;
  for (int v : values) out.push_back(static_cast<std::byte>(v));
  return out;
}

void append_u32(std::vector<std::byte>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}

void append_u64(std::vector<std::byte>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}

// Hand-assembled file, independent of encode_tspw.
std::vector<std::byte> handmade(std::uint32_t version, const std::vector<std::string>& names, std::uint8_t dtype = 0) {
  std::vector<std::byte> b = bytes_of({'T', 'S', 'P', 'W'});
  append_u32(b, version);
  append_u32(b, static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    append_u32(b, static_cast<std::uint32_t>(name.size()));
    for (char c : name) b.push_back(static_cast<std::byte>(c));
    b.push_back(static_cast<std::byte>(dtype));
    append_u32(b, 2);
    append_u64(b, 1);
    append_u64(b, 2);
    for (int i = 0; i < (dtype == 1 ? 16 : 8); ++i) b.push_back(std::byte{0});
  }
  return b;
}

sg::FormatErrc decode_error(std::span<const std::byte> bytes) {
  try {
    sg::decode_tspw(bytes);
  } catch (const sg::FormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return sg::FormatErrc::io;
}

sg::ModelConfig tiny_config() {
  sg::ModelConfig c;
  c.hidden_size = 64;
  c.intermediate_size = 256;
  c.num_layers = 2;
  c.activation = sg::ActivationKind::drelu();
  return c;
}

}  // namespace

TEST(Tspw, EmptyFileIsHeaderOnly) {
  const auto bytes = sg::encode_tspw(sg::TensorFile{});
  EXPECT_EQ(bytes.size(), 12U);
  EXPECT_EQ(bytes, handmade(1, {}));
  EXPECT_EQ(sg::decode_tspw(bytes).size(), 0U);
}

TEST(Tspw, SingleTensorByteCount) {
  sg::TensorFile f;
  f.add({"w", {2, 2}, std::vector<float>{1.0F, 2.0F, 3.0F, 4.0F}});
  const auto bytes = sg::encode_tspw(f);
  // header + name length + name + dtype + ndim + two u64 dims + four f32
  EXPECT_EQ(bytes.size(), 12U + (4 + 1 + 1 + 4 + 16 + 16));
  // 1.0f = 0x3F800000 little-endian at the start of the payload.
  const std::size_t payload = 12 + 4 + 1 + 1 + 4 + 16;
  EXPECT_EQ(bytes[payload + 3], std::byte{0x3F});
  EXPECT_EQ(bytes[payload + 2], std::byte{0x80});
  EXPECT_EQ(bytes[payload], std::byte{0x00});
}

TEST(Tspw, HandmadeFileDecodes) {
  const auto bytes = handmade(1, {"a", "bc"}, 1);
  const auto f = sg::decode_tspw(bytes);
  ASSERT_EQ(f.size(), 2U);
  EXPECT_EQ(f.at("bc").dims, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(f.at("a").dtype(), sg::DType::f64);
  EXPECT_EQ(sg::encode_tspw(f), bytes);
}

TEST(Tspw, CorruptFilesRaiseDistinctErrors) {
  auto bad_magic = handmade(1, {"w"});
  bad_magic[0] = std::byte{'X'};
  EXPECT_EQ(decode_error(bad_magic), sg::FormatErrc::bad_magic);
  EXPECT_EQ(decode_error(bytes_of({'T', 'S'})), sg::FormatErrc::bad_magic);
  EXPECT_EQ(decode_error(handmade(2, {"w"})), sg::FormatErrc::unsupported_version);
  EXPECT_EQ(decode_error(handmade(1, {"w", "w"})), sg::FormatErrc::duplicate_name);
  EXPECT_EQ(decode_error(handmade(1, {"w"}, 7)), sg::FormatErrc::bad_dtype);
  auto trailing = handmade(1, {"w"});
  trailing.push_back(std::byte{0});
  EXPECT_EQ(decode_error(trailing), sg::FormatErrc::trailing_bytes);
  const auto full = handmade(1, {"w", "v"});
  for (std::size_t cut = 4 + 4; cut < full.size(); ++cut) {
    EXPECT_EQ(decode_error(std::span<const std::byte>(full).first(cut)), sg::FormatErrc::truncated) << "cut " << cut;
  }
  // A tensor count larger than what follows.
  auto count = handmade(1, {"w"});
  count[8] = std::byte{5};
  EXPECT_EQ(decode_error(count), sg::FormatErrc::truncated);
  EXPECT_THROW(sg::load_tspw("/nonexistent/dir/model.tspw"), sg::FormatError);
}

TEST(Tspw, ErrorCodesHaveNames) {
  EXPECT_EQ(sg::to_string(sg::FormatErrc::bad_magic), "bad_magic");
  EXPECT_EQ(sg::to_string(sg::FormatErrc::duplicate_name), "duplicate_name");
}

TEST(TensorFile, AddValidation) {
  sg::TensorFile f;
  f.add({"a", {2}, std::vector<float>{1.0F, 2.0F}});
  EXPECT_THROW(f.add({"a", {1}, std::vector<float>{1.0F}}), sg::FormatError);
  EXPECT_THROW(f.add({"b", {3}, std::vector<float>{1.0F}}), sg::FormatError);
  EXPECT_THROW(f.at("missing"), sg::FormatError);
  EXPECT_EQ(f.find("missing"), nullptr);
}

TEST(TspwProperty, RoundTripIsBitwise) {
  sg::Rng rng(91);
  for (int trial = 0; trial < 100; ++trial) {
    sg::TensorFile f;
    const std::size_t count = sg::testing::uniform_size(rng, 0, 6);
    for (std::size_t t = 0; t < count; ++t) {
      std::vector<std::uint64_t> dims;
      std::uint64_t elements = 1;
      const std::size_t ndim = sg::testing::uniform_size(rng, 0, 3);
      for (std::size_t k = 0; k < ndim; ++k) {
        dims.push_back(rng.below(5));
        elements *= dims.back();
      }
      sg::Tensor tensor{"t" + std::to_string(t) + "_" + std::to_string(rng.below(1000)), dims, {}};
      if (rng.below(2) == 0) {
        std::vector<float> v(elements);
        // Raw bit patterns, including NaN payloads and signed zeros.
        for (auto& x : v) x = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next_u64()));
        tensor.data = std::move(v);
      } else {
        std::vector<double> v(elements);
        for (auto& x : v) x = std::bit_cast<double>(rng.next_u64());
        tensor.data = std::move(v);
      }
      f.add(std::move(tensor));
    }
    const auto bytes = sg::encode_tspw(f);
    ASSERT_EQ(sg::encode_tspw(sg::decode_tspw(bytes)), bytes);
  }
}

TEST(Model, GenerateTwiceIsIdentical) {
  const auto dir = temp_dir();
  auto c = tiny_config();
  sg::save_model(sg::gen_synthetic_model(c, 7, 0.02), dir / "a.tspw");
  sg::save_model(sg::gen_synthetic_model(c, 7, 0.02), dir / "b.tspw");
  std::ifstream a(dir / "a.tspw", std::ios::binary);
  std::ifstream b(dir / "b.tspw", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_FALSE(sa.empty());
  EXPECT_EQ(sa, sb);
  EXPECT_NE(sg::encode_tspw(sg::model_to_tensors(sg::gen_synthetic_model(c, 8, 0.02))),
            sg::encode_tspw(sg::model_to_tensors(sg::gen_synthetic_model(c, 7, 0.02))));
}

TEST(Model, TensorNamesAndCounts) {
  auto c = tiny_config();
  const auto dense = sg::model_to_tensors(sg::gen_synthetic_model(c, 1, 0.02));
  EXPECT_EQ(dense.size(), 6U);
  EXPECT_NE(dense.find("layer.1.down"), nullptr);
  EXPECT_EQ(dense.at("layer.0.gate").dims, (std::vector<std::uint64_t>{256, 64}));
  EXPECT_EQ(dense.at("layer.0.down").dims, (std::vector<std::uint64_t>{64, 256}));
  c.num_experts = 4;
  c.experts_per_token = 2;
  const auto moe = sg::model_to_tensors(sg::gen_synthetic_model(c, 1, 0.02));
  EXPECT_EQ(moe.size(), 2U * (4 * 3 + 1));
  EXPECT_NE(moe.find("layer.0.router"), nullptr);
  EXPECT_NE(moe.find("layer.1.expert.3.up"), nullptr);
}

TEST(Model, SampleStdOfEveryTensor) {
  const auto file = sg::model_to_tensors(sg::gen_synthetic_model(tiny_config(), 3, 0.02));
  for (const auto& t : file.tensors()) {
    const auto& v = t.f32();
    double mean = 0.0;
    for (float x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (float x : v) var += (x - mean) * (x - mean);
    const double s = std::sqrt(var / static_cast<double>(v.size() - 1));
    EXPECT_GT(s, 0.01) << t.name;
    EXPECT_LT(s, 0.03) << t.name;
  }
}

TEST(Model, SaveLoadRoundTrip) {
  const auto dir = temp_dir();
  auto c = tiny_config();
  c.num_experts = 4;
  c.experts_per_token = 2;
  c.predictor = sg::PredictorConfig{8, 0.4};
  auto model = sg::gen_synthetic_model(c, 5, 0.02);
  sg::Rng rng(6);
  for (auto& layer : model.layers) {
    for (int e = 0; e < 4; ++e) {
      layer.predictors.emplace_back(sg::gaussian_matrix<float>(8, 64, 0.1, rng), sg::gaussian_matrix<float>(256, 8, 0.1, rng), 0.4);
    }
  }
  sg::save_model(model, dir / "m.tspw");
  EXPECT_TRUE(fs::exists(dir / "m.tspw.config.json"));
  const auto loaded = sg::load_model(dir / "m.tspw");
  EXPECT_EQ(loaded.config, c);
  EXPECT_EQ(sg::encode_tspw(sg::model_to_tensors(loaded)), sg::encode_tspw(sg::model_to_tensors(model)));
  EXPECT_EQ(loaded.layers[1].predictors.size(), 4U);
  EXPECT_EQ(loaded.layers[1].predictors[2].threshold(), 0.4);
  const auto x = sg::gaussian_vector<float>(64, 1.0, rng);
  EXPECT_EQ(sg::stack_forward(loaded, x.span()), sg::stack_forward(model, x.span()));
}

TEST(Model, MissingAndMisshapenTensors) {
  const auto c = tiny_config();
  const auto full = sg::model_to_tensors(sg::gen_synthetic_model(c, 1, 0.02));
  sg::TensorFile missing;
  for (const auto& t : full.tensors())
    if (t.name != "layer.1.up") missing.add(t);
  try {
    sg::model_from_tensors(c, missing);
    FAIL();
  } catch (const sg::FormatError& e) {
    EXPECT_EQ(e.code(), sg::FormatErrc::missing_tensor);
  }
  auto other = c;
  other.hidden_size = 32;
  try {
    sg::model_from_tensors(other, full);
    FAIL();
  } catch (const sg::FormatError& e) {
    EXPECT_EQ(e.code(), sg::FormatErrc::shape_mismatch);
  }
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  auto c = tiny_config();
  c.activation = sg::ActivationKind::shifted_relu(0.125);
  c.num_experts = 8;
  c.experts_per_token = 2;
  c.predictor = sg::PredictorConfig{8, 0.5};
  EXPECT_EQ(sg::model_config_from_json(sg::to_json(c)), c);

  const auto parsed = sg::model_config_from_json(nlohmann::json::parse(
      R"({"hidden_size": 4, "intermediate_size": 8, "num_layers": 1, "activation": "reglu"})"));
  EXPECT_EQ(parsed.activation, sg::ActivationKind::reglu());
  EXPECT_FALSE(parsed.is_moe());

  const auto code_of = [](const char* text) {
    try {
      sg::model_config_from_json(nlohmann::json::parse(text));
    } catch (const sg::FormatError& e) {
      return e.code();
    }
    return sg::FormatErrc::io;
  };
  EXPECT_EQ(code_of(R"({"hidden_size": 4, "num_layers": 1, "activation": "drelu"})"), sg::FormatErrc::bad_config);
  EXPECT_EQ(code_of(R"({"hidden_size": 0, "intermediate_size": 8, "num_layers": 1, "activation": "drelu"})"),
            sg::FormatErrc::bad_config);
  EXPECT_EQ(code_of(R"({"hidden_size": 4, "intermediate_size": 8, "num_layers": 1, "activation": "gelu"})"),
            sg::FormatErrc::bad_config);
  EXPECT_EQ(code_of(R"({"hidden_size": 4, "intermediate_size": 8, "num_layers": 1, "activation": "drelu",
                        "num_experts": 2, "experts_per_token": 3})"),
            sg::FormatErrc::bad_config);
}

TEST(ModelConfig, CommittedConfigsLoad) {
  const fs::path dir = fs::path(SPARSEGATE_SOURCE_DIR) / "configs";
  EXPECT_EQ(sg::load_model_config(dir / "tiny_drelu.json").activation, sg::ActivationKind::drelu());
  EXPECT_EQ(sg::load_model_config(dir / "tiny_swiglu.json").activation, sg::ActivationKind::swiglu());
  EXPECT_EQ(*sg::load_model_config(dir / "tiny_moe.json").num_experts, 4U);
}
