#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "twostream/flow.hpp"
#include "twostream/synth.hpp"

using namespace twostream;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    auto dir = fs::temp_directory_path() / "twostream_tests" / name;
    fs::remove_all(dir);
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

SynthSpec small_spec() {
    SynthSpec spec;
    spec.classes = 2;
    spec.videos_per_class = 3;
    spec.frames = 12;
    spec.canvas_w = 24;
    spec.canvas_h = 18;
    spec.seed = 5;
    return spec;
}

}  // namespace

TEST_CASE("synth emits one manifest entry per video", "[synth]") {
    SynthSpec spec = small_spec();
    spec.videos_per_class = 10;
    spec.frames = 30;
    auto dir = temp_dir("synth_count");
    auto entries = synth_dataset(spec, dir);
    CHECK(entries.size() == 20);
    for (const auto& e : entries) {
        CHECK(e.num_frames == 30);
        CHECK(e.kind == MediaKind::rgb);
        CHECK(fs::is_directory(dir / e.path));
    }
    // per-video payload: frames plus frames-1 flow fields
    auto first = dir / entries[0].path;
    std::size_t frames = 0, flows = 0;
    for (const auto& f : fs::directory_iterator(first)) {
        auto name = f.path().filename().string();
        if (name.rfind("frame_", 0) == 0) ++frames;
        if (name.rfind("flow_", 0) == 0) ++flows;
    }
    CHECK(frames == 30);
    CHECK(flows == 29);
}

TEST_CASE("same seed gives a byte-identical dataset", "[synth]") {
    SynthSpec spec = small_spec();
    auto a = temp_dir("synth_rep_a");
    auto b = temp_dir("synth_rep_b");
    synth_dataset(spec, a);
    synth_dataset(spec, b);
    for (const auto& f : fs::recursive_directory_iterator(a)) {
        if (!f.is_regular_file()) continue;
        auto rel = fs::relative(f.path(), a);
        REQUIRE(file_bytes(f.path()) == file_bytes(b / rel));
    }
    SynthSpec other = spec;
    other.seed = 6;
    auto c = temp_dir("synth_rep_c");
    synth_dataset(other, c);
    CHECK(file_bytes(a / "class0_vid0" / "frame_0000.tsr") !=
          file_bytes(c / "class0_vid0" / "frame_0000.tsr"));
}

TEST_CASE("a +2 px/frame bar quantizes its u plane to 140", "[synth]") {
    SynthSpec spec = small_spec();
    synth_detail::VideoParams p;
    p.texture_id = 0;
    p.velocity = {2.0, 0.0};
    p.x0 = 3;
    p.y0 = 2;
    p.bar_w = 8;
    p.bar_h = 6;
    FlowField flow = synth_detail::render_flow(spec, p, 0);
    Tensor q = quantize_plane(flow.u, 20.0);
    std::size_t bar_pixels = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (flow.u[i] != 0.0) {
            ++bar_pixels;
            REQUIRE(q[i] == 140.0);
        } else {
            REQUIRE(q[i] == 128.0);
        }
    }
    CHECK(bar_pixels == 8 * 6);
}

TEST_CASE("joint mode gives every class a unique texture and velocity", "[synth]") {
    SynthSpec spec = small_spec();
    spec.classes = 4;
    std::set<std::size_t> textures;
    std::set<double> speeds;
    for (std::size_t cls = 0; cls < 4; ++cls) {
        auto p = synth_detail::video_params(spec, cls, 0);
        textures.insert(p.texture_id);
        speeds.insert(p.velocity.vy);
        CHECK(p.velocity.vx == 0.0);   // flip-safe: class motion is vertical
    }
    CHECK(textures.size() == 4);
    CHECK(speeds.size() == 4);
}

TEST_CASE("complementary mode splits the signal between streams", "[synth]") {
    SynthSpec spec = small_spec();
    spec.classes = 4;
    spec.mode = SynthMode::complementary;

    // appearance half: unique textures, horizontal drift balanced by parity
    auto a0 = synth_detail::video_params(spec, 0, 0);
    auto a0b = synth_detail::video_params(spec, 0, 1);
    auto a1 = synth_detail::video_params(spec, 1, 0);
    CHECK(a0.texture_id != a1.texture_id);
    CHECK(a0.velocity.vy == 0.0);
    CHECK(a0.velocity.vx == 2.0);
    CHECK(a0b.velocity.vx == -2.0);

    // motion half: shared texture, distinct vertical velocities
    auto b0 = synth_detail::video_params(spec, 2, 0);
    auto b1 = synth_detail::video_params(spec, 3, 0);
    CHECK(b0.texture_id == b1.texture_id);
    CHECK(b0.texture_id != a0.texture_id);
    CHECK(b0.texture_id != a1.texture_id);
    CHECK(b0.velocity.vx == 0.0);
    CHECK(b0.velocity.vy != b1.velocity.vy);

    CHECK_THROWS_AS([&] {
        SynthSpec odd = spec;
        odd.classes = 3;
        odd.validate();
    }(), ValueError);
}

TEST_CASE("rendered frames and flows stay consistent with the bar", "[synth]") {
    SynthSpec spec = small_spec();
    auto p = synth_detail::video_params(spec, 1, 2);
    Tensor frame = synth_detail::render_frame(spec, p, 4);
    FlowField flow = synth_detail::render_flow(spec, p, 4);
    REQUIRE(frame.shape() == Shape{3, spec.canvas_h, spec.canvas_w});
    REQUIRE(flow.u.shape() == Shape{spec.canvas_h, spec.canvas_w});
    std::size_t moving = 0;
    for (std::size_t y = 0; y < spec.canvas_h; ++y)
        for (std::size_t x = 0; x < spec.canvas_w; ++x) {
            bool textured = frame.at(0, y, x) != synth_detail::kBackground ||
                            frame.at(1, y, x) != synth_detail::kBackground ||
                            frame.at(2, y, x) != synth_detail::kBackground;
            bool flowing = flow.u.at(y, x) != 0.0 || flow.v.at(y, x) != 0.0;
            if (flowing) ++moving;
            REQUIRE(textured == flowing);   // flow is nonzero exactly on the bar
        }
    CHECK(moving == p.bar_w * p.bar_h);
}

TEST_CASE("synth validates its spec", "[synth]") {
    SynthSpec spec = small_spec();
    spec.classes = 9;
    CHECK_THROWS_AS(spec.validate(), ValueError);
    spec = small_spec();
    spec.frames = 1;
    CHECK_THROWS_AS(spec.validate(), ValueError);
    spec = small_spec();
    spec.canvas_w = 8;
    CHECK_THROWS_AS(spec.validate(), ValueError);
}
