#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "twostream/augment.hpp"
#include "twostream/rng.hpp"

using namespace twostream;

TEST_CASE("corner_offsets places the five crops", "[augment]") {
    SECTION("224x224 from the 340x256 canvas") {
        auto o = corner_offsets(340, 256, 224, 224);
        CHECK(o[0] == Offset{0, 0});
        CHECK(o[1] == Offset{116, 0});
        CHECK(o[2] == Offset{0, 32});
        CHECK(o[3] == Offset{116, 32});
        CHECK(o[4] == Offset{58, 16});
    }
    SECTION("full-canvas crop collapses to the origin") {
        for (const Offset& off : corner_offsets(340, 256, 340, 256)) {
            CHECK(off == Offset{0, 0});
        }
    }
    SECTION("256x168 crop") {
        auto o = corner_offsets(340, 256, 256, 168);
        CHECK(o[0] == Offset{0, 0});
        CHECK(o[1] == Offset{84, 0});
        CHECK(o[2] == Offset{0, 88});
        CHECK(o[3] == Offset{84, 88});
        CHECK(o[4] == Offset{42, 44});
    }
    SECTION("crop larger than canvas is rejected") {
        CHECK_THROWS_AS(corner_offsets(100, 100, 101, 50), ShapeError);
    }
    SECTION("offsets keep every crop in bounds") {
        CounterRng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            std::size_t cw = 10 + rng.next_below(300), ch = 10 + rng.next_below(300);
            std::size_t w = 1 + rng.next_below(cw), h = 1 + rng.next_below(ch);
            for (const Offset& off : corner_offsets(cw, ch, w, h)) {
                CHECK(off.x + w <= cw);
                CHECK(off.y + h <= ch);
            }
        }
    }
}

TEST_CASE("sample_crop is seed-deterministic and stays in the product space", "[augment]") {
    CanvasSpec spec;
    CHECK(sample_crop(spec, 77) == sample_crop(spec, 77));

    std::set<std::size_t> scales(spec.scale_set.begin(), spec.scale_set.end());
    for (std::uint64_t s = 0; s < 2000; ++s) {
        CropSpec cs = sample_crop(spec, s);
        CHECK(scales.count(cs.crop_w) == 1);
        CHECK(scales.count(cs.crop_h) == 1);
        CHECK(static_cast<int>(cs.position) < 5);
    }
}

TEST_CASE("degenerate scale set leaves 10 outcomes", "[augment]") {
    CanvasSpec spec;
    spec.scale_set = {224};
    std::set<std::string> seen;
    for (std::uint64_t s = 0; s < 4000; ++s) {
        CropSpec cs = sample_crop(spec, s);
        CHECK(cs.crop_w == 224);
        CHECK(cs.crop_h == 224);
        seen.insert(cs.to_record());
    }
    CHECK(seen.size() == 10);
}

TEST_CASE("100k draws hit all 160 configurations near-uniformly", "[augment]") {
    CanvasSpec spec;
    std::map<std::string, int> counts;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        counts[sample_crop(spec, derive_key(2026, i)).to_record()]++;
    }
    REQUIRE(counts.size() == 160);
    double expected = draws / 160.0;
    for (const auto& [record, count] : counts) {
        CHECK(count > expected * 0.8);
        CHECK(count < expected * 1.2);
    }
}

TEST_CASE("apply_crop extracts, resizes and flips", "[augment]") {
    CanvasSpec spec{8, 6, {4, 6}, 4};

    SECTION("identity resize at out_size returns the window exactly") {
        CounterRng rng(9);
        Tensor img({1, 6, 8});
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.next_unit();
        CropSpec cs{4, 4, CropPosition::top_left, false};
        Tensor out = apply_crop(img, cs, spec);
        REQUIRE(out.shape() == Shape{1, 4, 4});
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x) CHECK(out.at(0, y, x) == img.at(0, y, x));
    }
    SECTION("constant image stays constant under any crop") {
        Tensor img = Tensor::full({3, 6, 8}, 0.37);
        for (std::uint64_t s = 0; s < 32; ++s) {
            CropSpec cs = sample_crop(spec, s);
            Tensor out = apply_crop(img, cs, spec);
            REQUIRE(out.shape() == Shape{3, 4, 4});
            for (std::size_t i = 0; i < out.size(); ++i) {
                REQUIRE_THAT(out[i], Catch::Matchers::WithinAbs(0.37, 1e-12));
            }
        }
    }
    SECTION("dimension mismatch is rejected") {
        Tensor img({3, 5, 8});
        CropSpec cs{4, 4, CropPosition::top_left, false};
        CHECK_THROWS_AS(apply_crop(img, cs, spec), ShapeError);
    }
}

TEST_CASE("bilinear upscale preserves half-pixel-aligned corners", "[augment]") {
    Tensor img({1, 2, 2}, {0, 2, 4, 6});
    Tensor out = bilinear_resize(img, 4, 4);
    REQUIRE(out.shape() == Shape{1, 4, 4});
    CHECK(out.at(0, 0, 0) == 0.0);
    CHECK(out.at(0, 0, 3) == 2.0);
    CHECK(out.at(0, 3, 0) == 4.0);
    CHECK(out.at(0, 3, 3) == 6.0);
    // interior interpolates: source coord (0.25, 0.25) between all four texels
    CHECK_THAT(out.at(0, 1, 1), Catch::Matchers::WithinAbs(
        0.75 * (0.75 * 0.0 + 0.25 * 2.0) + 0.25 * (0.75 * 4.0 + 0.25 * 6.0), 1e-12));
}

TEST_CASE("flip_input reverses width and is an involution", "[augment]") {
    SECTION("rgb row flips") {
        Tensor img({1, 1, 3}, {1, 2, 3});
        Tensor flipped = flip_input(img, FlipKind::rgb);
        CHECK(flipped.values() == std::vector<double>{3, 2, 1});
    }
    SECTION("rgb double flip is bit-identical") {
        CounterRng rng(12);
        Tensor img({3, 4, 5});
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.next_unit();
        Tensor twice = flip_input(flip_input(img, FlipKind::rgb), FlipKind::rgb);
        CHECK(twice.values() == img.values());
    }
    SECTION("flow u-channels remap q -> 255-q") {
        Tensor stack = Tensor::full({2, 2, 2}, 128.0);
        Tensor flipped = flip_input(stack, FlipKind::flow_stack);
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t x = 0; x < 2; ++x) {
                CHECK(flipped.at(0, y, x) == 127.0);   // u: 255 - 128
                CHECK(flipped.at(1, y, x) == 128.0);   // v untouched
            }
    }
    SECTION("flow double flip is bit-identical") {
        CounterRng rng(13);
        Tensor stack({4, 3, 5});
        for (std::size_t i = 0; i < stack.size(); ++i)
            stack[i] = static_cast<double>(rng.next_below(256));
        Tensor twice =
            flip_input(flip_input(stack, FlipKind::flow_stack), FlipKind::flow_stack);
        CHECK(twice.values() == stack.values());
    }
    SECTION("odd channel count is rejected for flow stacks") {
        Tensor stack({3, 2, 2});
        CHECK_THROWS_AS(flip_input(stack, FlipKind::flow_stack), ShapeError);
    }
}

TEST_CASE("CropSpec records round-trip", "[augment]") {
    CropSpec cs{192, 256, CropPosition::bottom_right, true};
    CHECK(cs.to_record() == "192,256,br,1");
    CHECK(CropSpec::from_record(cs.to_record()) == cs);
    CHECK_THROWS_AS(CropSpec::from_record("192,256"), ValueError);
}
