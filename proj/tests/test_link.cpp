#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "embchord/link.hpp"

using namespace embchord;

namespace {
byte_buffer pattern(std::size_t n) {
    byte_buffer b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i ^ (i >> 3));
    return b;
}
} // namespace

TEST_CASE("a 300-byte envelope over MTU 64 yields exactly 6 fragments") {
    auto env = pattern(300);
    auto frags = fragment_envelope(env, 7, 64);
    // 8-byte header leaves 56 payload bytes per fragment: ceil(300/56) = 6
    REQUIRE(frags.size() == 6);
    for (const auto& f : frags) {
        CHECK(encode_fragment(f).size() <= 64);
        CHECK(f.total == 6);
    }
    std::size_t total = 0;
    for (const auto& f : frags) total += f.payload.size();
    CHECK(total == 300);
}

TEST_CASE("an envelope smaller than the MTU is a single fragment") {
    auto frags = fragment_envelope(pattern(50), 1, 64);
    REQUIRE(frags.size() == 1);
    CHECK(frags[0].index == 0);
    CHECK(frags[0].total == 1);
}

TEST_CASE("relay re-fragmentation arithmetic: one wide fragment becomes three narrow ones") {
    // a 150-byte envelope fits one MTU-256 fragment but needs three at MTU 64
    CHECK(fragment_envelope(pattern(150), 9, 256).size() == 1);
    CHECK(fragment_envelope(pattern(150), 9, 64).size() == 3);
}

TEST_CASE("fragment wire form round-trips") {
    auto frags = fragment_envelope(pattern(200), 0xDEADBEEF, 64);
    for (const auto& f : frags) {
        auto bytes = encode_fragment(f);
        CHECK(decode_fragment(bytes) == f);
    }
    CHECK_THROWS_AS(decode_fragment(byte_buffer{1, 2, 3}), malformed_error);
}

TEST_CASE("any arrival permutation reassembles the identical envelope") {
    auto env = pattern(300);
    auto frags = fragment_envelope(env, 42, 64);
    REQUIRE(frags.size() == 6);
    std::vector<std::size_t> order(frags.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::shuffle(order.begin(), order.end(), rng);
        Reassembler r;
        Reassembler::key k{"mem:lan/a", 42};
        std::optional<byte_buffer> done;
        for (std::size_t i = 0; i < order.size(); ++i) {
            auto result = r.accept(k, frags[order[i]], 100 + i);
            if (i + 1 < order.size()) {
                CHECK_FALSE(result.has_value());
            } else {
                done = result;
            }
        }
        REQUIRE(done.has_value());
        CHECK(*done == env);
        CHECK(r.pending_count() == 0);
    }
}

TEST_CASE("a missing fragment never completes and expires after the window") {
    auto frags = fragment_envelope(pattern(300), 9, 64);
    Reassembler r;
    Reassembler::key k{"mem:lan/a", 9};
    for (std::size_t i = 0; i + 1 < frags.size(); ++i)
        CHECK_FALSE(r.accept(k, frags[i], 1000).has_value());
    CHECK(r.pending_count() == 1);
    CHECK(r.expire_older_than(1000) == 0);  // not yet past the window
    CHECK(r.expire_older_than(1001) == 1);
    CHECK(r.pending_count() == 0);
}

TEST_CASE("duplicate fragments are ignored") {
    auto env = pattern(120);
    auto frags = fragment_envelope(env, 3, 64);
    REQUIRE(frags.size() == 3);
    Reassembler r;
    Reassembler::key k{"ep", 3};
    CHECK_FALSE(r.accept(k, frags[0], 0).has_value());
    CHECK_FALSE(r.accept(k, frags[0], 0).has_value());
    CHECK_FALSE(r.accept(k, frags[1], 0).has_value());
    auto done = r.accept(k, frags[2], 0);
    REQUIRE(done.has_value());
    CHECK(*done == env);
}

TEST_CASE("fragments from different senders do not mix") {
    auto a = fragment_envelope(pattern(100), 5, 64);
    auto b = fragment_envelope(pattern(100), 5, 64); // same envelope_id, other origin
    Reassembler r;
    CHECK_FALSE(r.accept({"ep-a", 5}, a[0], 0).has_value());
    CHECK_FALSE(r.accept({"ep-b", 5}, b[1], 0).has_value());
    CHECK(r.pending_count() == 2);
}
