#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "mclkit/checkpoint.hpp"

using namespace mclkit;
namespace fs = std::filesystem;

namespace {

// Bit-at-a-time reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t slow_crc(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::uint8_t b : bytes) {
        c ^= b;
        for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
    }
    return ~c;
}

MclModel<float> student(std::uint64_t seed, const std::string& meas = "4x4x1") {
    return build_mcl<float>({16, 16, 1}, MeasurementConfig::parse(meas), 4, ModelKind::mcl_nonlinear, seed);
}

fs::path tmp(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "mclkit_ckpt_test";
    fs::create_directories(dir);
    return dir / name;
}

std::vector<float> flat(const CompressiveNet<float>& m) {
    std::vector<float> out;
    for (const auto* s : m.stacks())
        for (const auto* p : s->params()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
    return out;
}

}  // namespace

TEST(Crc32, MatchesBitwiseOracle) {
    const std::string check = "123456789";
    std::vector<std::uint8_t> bytes(check.begin(), check.end());
    EXPECT_EQ(crc32(bytes), 0xCBF43926u);
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::uint8_t> data(rng.below(300));
        for (auto& b : data) b = std::uint8_t(rng.below(256));
        EXPECT_EQ(crc32(data), slow_crc(data));
    }
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
    const auto m = student(3);
    const auto path = tmp("a.ckpt").string();
    save_checkpoint(m, path);
    const auto loaded = load_mcl<float>(path);
    EXPECT_EQ(loaded.spec, m.spec);
    EXPECT_EQ(flat(loaded), flat(m));
    const auto path2 = tmp("b.ckpt").string();
    save_checkpoint(loaded, path2);
    EXPECT_EQ(read_file(path), read_file(path2));
    // logits agree exactly
    Tensor<float> x({16, 16, 1});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = float(i % 7) / 7.0f;
    EXPECT_EQ(m.logits(x).values(), loaded.logits(x).values());
}

TEST(Checkpoint, PriorRoundTripAndKindChecks) {
    const auto p = build_prior<float>({16, 16, 1}, MeasurementConfig::parse("4x4x1"), 4, 1, 8, Capacity::large);
    const auto path = tmp("p.ckpt").string();
    save_checkpoint(p, path);
    const auto q = load_prior<float>(path);
    EXPECT_EQ(q.spec, p.spec);
    EXPECT_EQ(flat(q), flat(p));
    EXPECT_THROW(load_mcl<float>(path), ConfigError);
    save_checkpoint(student(1), path);
    EXPECT_THROW(load_prior<float>(path), ConfigError);
}

TEST(Checkpoint, TrailerIsCrcOfPrecedingBytes) {
    const auto bytes = encode_model(student(2));
    ASSERT_GT(bytes.size(), 20u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MCLK");
    std::vector<std::uint8_t> head(bytes.begin(), bytes.end() - 4);
    const std::uint32_t stored = std::uint32_t(bytes[bytes.size() - 4]) | std::uint32_t(bytes[bytes.size() - 3]) << 8 |
                                 std::uint32_t(bytes[bytes.size() - 2]) << 16 | std::uint32_t(bytes[bytes.size() - 1]) << 24;
    EXPECT_EQ(stored, slow_crc(head));
}

TEST(Checkpoint, AnySingleCorruptedPayloadByteIsRejected) {
    const auto bytes = encode_model(student(4));
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        auto bad = bytes;
        const std::size_t at = 16 + rng.below(bad.size() - 20);  // inside the record body
        bad[at] ^= std::uint8_t(1 + rng.below(255));
        EXPECT_THROW(decode_checkpoint(bad), ChecksumError) << "byte " << at;
    }
    auto bad = bytes;
    bad.back() ^= 0x01;
    EXPECT_THROW(decode_checkpoint(bad), ChecksumError);
}

TEST(Checkpoint, TruncationMagicAndVersion) {
    const auto bytes = encode_model(student(5));
    for (std::size_t keep : {std::size_t(0), std::size_t(3), std::size_t(10), std::size_t(17), bytes.size() / 2,
                             bytes.size() - 1}) {
        std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + keep);
        EXPECT_THROW(decode_checkpoint(cut), FormatError) << keep;
    }
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 9);
    EXPECT_THROW(decode_checkpoint(cut), TruncatedError);

    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_THROW(decode_checkpoint(magic), BadMagicError);
    auto version = bytes;
    version[4] = 2;
    EXPECT_THROW(decode_checkpoint(version), VersionError);
}

TEST(Checkpoint, OtherConfigurationNamesTheField) {
    const auto path = tmp("c.ckpt").string();
    save_checkpoint(student(6, "8x8x1"), path);
    auto m = student(6, "4x4x1");
    const auto before = flat(m);
    try {
        load_parameters(m, path);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("meta.measurement"), std::string::npos) << msg;
        EXPECT_NE(msg.find("8x8x1"), std::string::npos) << msg;
    }
    auto other_classes = build_mcl<float>({16, 16, 1}, MeasurementConfig::parse("8x8x1"), 5, ModelKind::mcl_nonlinear, 0);
    try {
        load_parameters(other_classes, path);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("meta.classes"), std::string::npos);
    }
    EXPECT_EQ(flat(m), before);
}

TEST(Checkpoint, MissingParameterFieldIsNamed) {
    auto m = student(7);
    auto records = detail::meta_records(m.spec);
    auto params = detail::parameter_records(m);
    const std::string dropped = params[2].name;
    params.erase(params.begin() + 2);
    records.insert(records.end(), params.begin(), params.end());
    try {
        assign_parameters(m, decode_checkpoint(encode_checkpoint(records)));
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find(dropped), std::string::npos);
    }
}

TEST(Checkpoint, MissingFileIsAnError) {
    EXPECT_THROW(read_checkpoint(tmp("does-not-exist.ckpt").string()), Error);
}
