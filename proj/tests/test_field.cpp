#include "doctest.h"
#include "test_support.hpp"

#include "gaf/field.hpp"

#include <cstring>
#include <filesystem>
#include <random>

using namespace gaf;

namespace {

// Field whose values are exactly representable in float32.
GaussianField float_field(std::mt19937_64& rng, int n)
{
    auto f = gaf::testing::random_field(rng, n);
    for (auto& p : f.points) {
        PointParams v = pack(p);
        for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
        unpack(v, p);
        p.label = static_cast<std::uint8_t>(rng() % 7);
    }
    f.timestep = 12;
    f.interval = 8;
    return f;
}

}  // namespace

TEST_CASE("advance")
{
    std::mt19937_64 rng(1);
    const auto f = gaf::testing::random_field(rng, 10);
    CHECK(advance(f, 0.0) == f);

    GaussianField one;
    GaussianPoint p;
    p.mean = {0, 0, 0};
    p.displacement = {1, 0, 0};
    p.color = {0.1, 0.2, 0.3};
    one.points.push_back(p);
    const auto moved = advance(one, 1.0);
    CHECK(moved.points[0].mean == Vec3{1, 0, 0});
    CHECK(moved.points[0].displacement == Vec3::Zero());
    CHECK(moved.points[0].color == p.color);
    CHECK(moved.points[0].rotation == p.rotation);
    CHECK(moved.points[0].log_scale == p.log_scale);

    // dyadic values: 0.25 then the remaining 0.75 is exact
    GaussianField dy;
    GaussianPoint q;
    q.mean = {0.5, -1.25, 2.0};
    q.displacement = {0.125, 0.5, -0.75};
    dy.points.push_back(q);
    CHECK(advance(advance(dy, 0.25), 1.0) == advance(dy, 1.0));

    CHECK_THROWS(advance(f, 1.5));
    CHECK_THROWS(advance(f, -0.1));
}

TEST_CASE("advance properties")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 0.95);
    for (int trial = 0; trial < 100; ++trial) {
        const auto f = gaf::testing::random_field(rng, 12);
        const double a = u(rng);
        const auto g = advance(f, a);
        REQUIRE(g.size() == f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            CHECK(g.points[i].label == f.points[i].label);
            CHECK(g.points[i].color == f.points[i].color);
            CHECK(g.points[i].opacity_logit == f.points[i].opacity_logit);
            CHECK(g.points[i].rotation == f.points[i].rotation);
            CHECK(g.points[i].log_scale == f.points[i].log_scale);
        }
        // fractions summing to one reach the future field
        const auto full = advance(f, 1.0);
        const auto two_step = advance(g, 1.0);
        for (std::size_t i = 0; i < f.size(); ++i)
            CHECK((two_step.points[i].mean - full.points[i].mean).cwiseAbs().maxCoeff() < 1e-12);

        for (std::uint8_t label : {0, 1, 2}) {
            CHECK(extract_subset(full, label).positions == extract_subset(f, label).future_positions);
        }
    }
}

TEST_CASE("extract_subset")
{
    GaussianField f;
    for (int i = 0; i < 10; ++i) {
        GaussianPoint p;
        p.mean = {double(i), 0, 0};
        p.displacement = {0, 1, 0};
        p.label = (i == 2 || i == 5 || i == 7) ? 1 : 0;
        f.points.push_back(p);
    }
    const auto s = extract_subset(f, 1);
    REQUIRE(s.positions.size() == 3);
    CHECK(s.positions[1] == Vec3{5, 0, 0});
    CHECK(s.future_positions[2] == Vec3{7, 1, 0});

    for (auto& p : f.points) p.label = 0;
    CHECK_THROWS_AS(extract_subset(f, 1), EmptySubsetError);
}

TEST_CASE("GAF1 format")
{
    std::mt19937_64 rng(3);
    const auto f = float_field(rng, 1000);
    const auto bytes = encode_field(f);
    CHECK(bytes.size() == 20 + 1000 * (17 * 4 + 1));
    CHECK(std::memcmp(bytes.data(), "GAF1", 4) == 0);
    CHECK(decode_field(bytes) == f);
    CHECK(encode_field(decode_field(bytes)) == bytes);

    const auto dir = std::filesystem::temp_directory_path() / "gaf_field_test";
    std::filesystem::create_directories(dir);
    save_field(dir / "f.gaf", f);
    CHECK(load_field(dir / "f.gaf") == f);

    SUBCASE("header layout")
    {
        GaussianField one;
        one.timestep = 3;
        one.interval = 8;
        GaussianPoint p;
        p.label = 9;
        one.points.push_back(p);
        const auto b = encode_field(one);
        CHECK(b[4] == 1);   // version
        CHECK(b[8] == 1);   // count
        CHECK(b[12] == 3);  // t
        CHECK(b[16] == 8);  // interval
        CHECK(b.back() == 9);
        // first float is mean.x == 0.0f; rotation w == 1.0f at offset 20 + 10 * 4
        const float w = std::bit_cast<float>(std::uint32_t(b[60]) | std::uint32_t(b[61]) << 8 |
                                             std::uint32_t(b[62]) << 16 | std::uint32_t(b[63]) << 24);
        CHECK(w == 1.0f);
    }

    SUBCASE("errors are distinct")
    {
        auto bad_magic = bytes;
        bad_magic[0] = 'X';
        try {
            decode_field(bad_magic);
            FAIL("expected error");
        } catch (const FieldFormatError& e) {
            CHECK(e.kind() == FieldFormatError::Kind::Magic);
        }
        auto bad_version = bytes;
        bad_version[4] = 2;
        try {
            decode_field(bad_version);
            FAIL("expected error");
        } catch (const FieldFormatError& e) {
            CHECK(e.kind() == FieldFormatError::Kind::Version);
        }
        auto truncated = bytes;
        truncated.resize(20 + 500 * 69 + 30);
        try {
            decode_field(truncated);
            FAIL("expected error");
        } catch (const FieldFormatError& e) {
            CHECK(e.kind() == FieldFormatError::Kind::Truncated);
        }
        CHECK_THROWS_AS(load_field(dir / "missing.gaf"), FieldFormatError);
    }
}
