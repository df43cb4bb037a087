#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "twostream/rng.hpp"
#include "twostream/tensor.hpp"

using namespace twostream;

namespace {

std::filesystem::path temp_file(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "twostream_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("tensor shape and data length must agree", "[tensor]") {
    CHECK_NOTHROW(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
}

TEST_CASE("row-major indexing uses trailing stride 1", "[tensor]") {
    Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
    CHECK(t.at(0, 2) == 2.0);
    CHECK(t.at(1, 0) == 3.0);
    Tensor u({1, 2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(u.at(0, 1, 0, 1) == 5.0);
    CHECK(u.at(0, 1, 1, 0) == 6.0);
}

TEST_CASE("slice and stack along the leading axis", "[tensor]") {
    Tensor t({4, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    Tensor s = slice_leading(t, 1, 2);
    CHECK(s.shape() == Shape{2, 2});
    CHECK(s[0] == 2.0);
    CHECK(s[3] == 5.0);
    CHECK_THROWS_AS(slice_leading(t, 3, 2), ShapeError);

    Tensor a({2}, {1, 2}), b({2}, {3, 4});
    Tensor st = stack_leading({a, b});
    CHECK(st.shape() == Shape{2, 2});
    CHECK(st[2] == 3.0);
}

TEST_CASE("TSR1 header layout is bit-exact", "[tensor]") {
    Tensor t({1, 2}, {1.0, 2.0});
    std::string buf = encode_tsr1(t, DType::f64);
    REQUIRE(buf.size() == 4 + 4 + 8 + 1 + 16);
    CHECK(buf.substr(0, 4) == "TSR1");
    // rank 2 little-endian
    CHECK(static_cast<unsigned char>(buf[4]) == 2);
    CHECK(static_cast<unsigned char>(buf[5]) == 0);
    // extents 1, 2
    CHECK(static_cast<unsigned char>(buf[8]) == 1);
    CHECK(static_cast<unsigned char>(buf[12]) == 2);
    // dtype tag f64
    CHECK(static_cast<unsigned char>(buf[16]) == 0);
}

TEST_CASE("TSR1 round-trips random tensors bit-exactly", "[tensor]") {
    CounterRng rng(20260809);
    for (int trial = 0; trial < 25; ++trial) {
        std::size_t rank = 1 + rng.next_below(4);
        Shape shape;
        for (std::size_t i = 0; i < rank; ++i) shape.push_back(1 + rng.next_below(5));
        Tensor t(shape);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_normal() * 1e3;
        std::string buf = encode_tsr1(t);
        DType tag;
        Tensor back = decode_tsr1(buf, &tag);
        REQUIRE(tag == DType::f64);
        REQUIRE(back.shape() == t.shape());
        for (std::size_t i = 0; i < t.size(); ++i) {
            REQUIRE(back[i] == t[i]);
        }
        REQUIRE(encode_tsr1(back) == buf);
    }
}

TEST_CASE("TSR1 u8 payload round-trips and validates", "[tensor]") {
    Tensor q({2, 2}, {0, 128, 255, 7});
    auto path = temp_file("u8.tsr");
    write_tsr1(path, q, DType::u8);
    CHECK(std::filesystem::file_size(path) == 4 + 4 + 8 + 1 + 4);
    DType tag;
    Tensor back = read_tsr1(path, &tag);
    CHECK(tag == DType::u8);
    CHECK(back.values() == q.values());

    Tensor bad({1}, {1.5});
    CHECK_THROWS_AS(encode_tsr1(bad, DType::u8), ValueError);
    Tensor neg({1}, {-1.0});
    CHECK_THROWS_AS(encode_tsr1(neg, DType::u8), ValueError);
}

TEST_CASE("TSR1 decode rejects malformed payloads", "[tensor]") {
    CHECK_THROWS_AS(decode_tsr1("nope"), IoError);
    Tensor t({2}, {1, 2});
    std::string buf = encode_tsr1(t);
    buf.pop_back();
    CHECK_THROWS_AS(decode_tsr1(buf), IoError);
    buf = encode_tsr1(t);
    buf[16] = 9;  // unknown dtype tag
    CHECK_THROWS_AS(decode_tsr1(buf), IoError);
}
