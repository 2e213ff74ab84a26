#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bspc/codec.hpp"
#include "bspc/harness.hpp"
#include "test_util.hpp"

using namespace bspc;

TEST_CASE("bit writer and reader are MSB-first and account bits") {
    BitWriter w;
    w.put_bits(0b101, 3);
    w.put_bits(0, 0);  // zero-width write is a no-op
    w.put_bits(0b0110, 4);
    w.put_bit(1);
    CHECK(w.bit_count() == 8);
    CHECK(w.bytes().size() == 1);
    CHECK(w.bytes()[0] == 0b10101101);

    BitReader r(w.bytes());
    CHECK(r.get_bits(3) == 0b101);
    CHECK(r.get_bits(0) == 0);
    CHECK(r.get_bits(5) == 0b01101);
    CHECK(r.bits_read() == 8);
    CHECK_THROWS_AS(r.get_bit(), StreamUnderflow);
}

TEST_CASE("quantize_fit examples") {
    const CoeffQuantizer q;  // steps 1/8, 1/8, 1
    const QuantizedCoeffs qc = quantize_fit(PlaneFit{0, 0, 7, 0, false}, q);
    CHECK(qc.ia == 0);
    CHECK(qc.ib == 0);
    CHECK(qc.ic == 7);

    CoeffQuantizer unit;
    unit.step_a = unit.step_b = unit.step_c = 1.0;
    const QuantizedCoeffs u = quantize_fit(PlaneFit{2.4, -1.6, 10, 0, false}, unit);
    CHECK(u.ia == 2);
    CHECK(u.ib == -2);
    CHECK(u.ic == 10);

    CHECK_THROWS_AS(quantize_fit(PlaneFit{std::nan(""), 0, 0, 0, false}, q),
                    std::invalid_argument);
}

TEST_CASE("quantize-dequantize error is at most half a step") {
    std::mt19937 rng(12);
    const CoeffQuantizer q;
    std::uniform_real_distribution<double> slope(-31.9, 31.9);
    std::uniform_real_distribution<double> offs(-127.9, 382.9);
    for (int i = 0; i < 500; ++i) {
        const PlaneFit fit{slope(rng), slope(rng), offs(rng), 0, false};
        const PlaneFit back = dequantize_fit(quantize_fit(fit, q), q);
        CHECK(std::fabs(back.a - fit.a) <= q.step_a / 2 + 1e-12);
        CHECK(std::fabs(back.b - fit.b) <= q.step_b / 2 + 1e-12);
        CHECK(std::fabs(back.c - fit.c) <= q.step_c / 2 + 1e-12);
    }
}

TEST_CASE("huffman codes stay within one bit of entropy") {
    std::mt19937 rng(2025);
    std::uniform_int_distribution<int> nsym(1, 300);
    std::uniform_int_distribution<std::uint64_t> freq(0, 1000);
    for (int iter = 0; iter < 50; ++iter) {
        std::vector<std::uint64_t> freqs(nsym(rng));
        for (auto& f : freqs) f = freq(rng);
        std::uint64_t total = 0;
        for (auto f : freqs) total += f;
        if (total == 0) continue;

        const std::vector<int> lengths = huffman_code_lengths(freqs);
        const CanonicalCode code(lengths);
        double avg = 0.0, entropy = 0.0;
        for (std::size_t s = 0; s < freqs.size(); ++s) {
            if (freqs[s] == 0) {
                continue;
            }
            const double p = static_cast<double>(freqs[s]) / static_cast<double>(total);
            avg += p * lengths[s];
            entropy -= p * std::log2(p);
            CHECK(lengths[s] >= 1);
            CHECK(lengths[s] <= kMaxCodeLength);
        }
        CHECK(avg <= entropy + 1.0 + 1e-9);
    }
}

TEST_CASE("huffman encode/decode round trip with canonical reconstruction") {
    std::mt19937 rng(77);
    std::vector<std::uint64_t> freqs(40);
    for (auto& f : freqs) f = rng() % 100;
    freqs[7] = 0;  // hole in the alphabet
    const std::vector<int> lengths = huffman_code_lengths(freqs);
    const CanonicalCode enc(lengths);
    const CanonicalCode dec(lengths);  // rebuilt from lengths alone

    std::vector<int> symbols;
    for (int i = 0; i < 2000; ++i) {
        const int s = static_cast<int>(rng() % freqs.size());
        if (freqs[s] > 0) symbols.push_back(s);
    }
    BitWriter w;
    for (int s : symbols) enc.encode(s, w);
    BitReader r(w.bytes());
    for (int s : symbols) CHECK(dec.decode(r) == s);
}

TEST_CASE("header round trip reproduces every field") {
    StreamHeader h;
    h.width = 321;
    h.height = 77;
    h.tile_size = 32;
    h.partition_limit = 500;
    h.lambda = 12.625;
    h.quantizer.step_a = 0.25;
    h.quantizer.step_b = 0.0625;
    h.quantizer.step_c = 2.0;

    std::vector<std::uint64_t> fa(h.quantizer.a_index_max() - h.quantizer.a_index_min() + 1, 0);
    std::vector<std::uint64_t> fb(h.quantizer.b_index_max() - h.quantizer.b_index_min() + 1, 0);
    std::vector<std::uint64_t> fc(h.quantizer.c_index_max() - h.quantizer.c_index_min() + 1, 0);
    fa[0] = 3; fa[10] = 1;
    fb[5] = 2; fb[6] = 2; fb[7] = 9;
    for (std::size_t i = 0; i < fc.size(); i += 3) fc[i] = 1 + i % 7;
    h.model.code_a = CanonicalCode(huffman_code_lengths(fa));
    h.model.code_b = CanonicalCode(huffman_code_lengths(fb));
    h.model.code_c = CanonicalCode(huffman_code_lengths(fc));

    const std::vector<std::uint8_t> bytes = serialize_header(h);
    std::size_t pos = 0;
    const StreamHeader back = parse_header(bytes, pos);
    CHECK(pos == bytes.size());
    CHECK(back.width == h.width);
    CHECK(back.height == h.height);
    CHECK(back.tile_size == h.tile_size);
    CHECK(back.partition_limit == h.partition_limit);
    CHECK(back.lambda == doctest::Approx(h.lambda).epsilon(1e-9));
    CHECK(back.quantizer.step_a == h.quantizer.step_a);
    CHECK(back.quantizer.step_b == h.quantizer.step_b);
    CHECK(back.quantizer.step_c == h.quantizer.step_c);
    CHECK(back.model.code_a.lengths() == h.model.code_a.lengths());
    CHECK(back.model.code_b.lengths() == h.model.code_b.lengths());
    CHECK(back.model.code_c.lengths() == h.model.code_c.lengths());
}

TEST_CASE("header rejects garbage") {
    StreamHeader h;
    h.width = 64;
    h.height = 64;
    h.tile_size = 64;
    h.partition_limit = 64;
    std::vector<std::uint64_t> f1(h.quantizer.a_index_max() - h.quantizer.a_index_min() + 1, 0);
    f1[1] = 1;
    h.model.code_a = CanonicalCode(huffman_code_lengths(f1));
    std::vector<std::uint64_t> fc(h.quantizer.c_index_max() - h.quantizer.c_index_min() + 1, 0);
    fc[1] = 1;
    h.model.code_b = h.model.code_a;
    h.model.code_c = CanonicalCode(huffman_code_lengths(fc));
    std::vector<std::uint8_t> good = serialize_header(h);

    std::size_t pos;
    std::vector<std::uint8_t> bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(parse_header(bad, pos), CorruptStreamError);

    bad = good;
    bad[4] = 9;  // version
    CHECK_THROWS_AS(parse_header(bad, pos), CorruptStreamError);

    bad = good;
    bad[6] = 0; bad[7] = 0; bad[8] = 0; bad[9] = 0;  // width 0
    CHECK_THROWS_AS(parse_header(bad, pos), CorruptStreamError);

    bad.assign(good.begin(), good.begin() + 10);  // truncated
    CHECK_THROWS_AS(parse_header(bad, pos), CorruptStreamError);
}

namespace {

struct TreeCodecFixture {
    GrayImage img;
    AngleGrid grid;
    BuildParams params;
    CoeffQuantizer quantizer;
    BspTree tree;

    TreeCodecFixture(int w, int h, std::uint32_t seed, int limit, int min_domain) {
        std::mt19937 rng(seed);
        img = bspc::test::random_image(rng, w, h);
        grid = make_angle_grid(w, h);
        params.partition_limit = limit;
        params.min_domain_pixels = min_domain;
        auto [t, stats] = build_tree(TileView(img), params, grid);
        tree = std::move(t);
    }

    HuffmanModel model() const {
        std::array<std::vector<std::uint64_t>, 3> hist = {
            std::vector<std::uint64_t>(quantizer.a_index_max() - quantizer.a_index_min() + 1, 0),
            std::vector<std::uint64_t>(quantizer.b_index_max() - quantizer.b_index_min() + 1, 0),
            std::vector<std::uint64_t>(quantizer.c_index_max() - quantizer.c_index_min() + 1, 0)};
        collect_leaf_symbols(tree, grid, params, quantizer, hist);
        HuffmanModel m;
        m.code_a = CanonicalCode(huffman_code_lengths(hist[0]));
        m.code_b = CanonicalCode(huffman_code_lengths(hist[1]));
        m.code_c = CanonicalCode(huffman_code_lengths(hist[2]));
        return m;
    }
};

// decoded tree vs the encoder-side tree: structure and lines identical, leaf
// fits exactly equal to the quantize->dequantize image of the encoder's fits
void check_trees_equal(const BspTree& encoder_side, const BspTree& decoded,
                       const CoeffQuantizer& q) {
    const BspTree expected = quantize_leaves(encoder_side, q);
    REQUIRE(expected.node_count() == decoded.node_count());
    for (int i = 0; i < expected.node_count(); ++i) {
        CHECK(expected.nodes[i].is_leaf() == decoded.nodes[i].is_leaf());
        CHECK(expected.nodes[i].child0 == decoded.nodes[i].child0);
        CHECK(expected.nodes[i].child1 == decoded.nodes[i].child1);
        CHECK(expected.nodes[i].anchor_x == decoded.nodes[i].anchor_x);
        CHECK(expected.nodes[i].anchor_y == decoded.nodes[i].anchor_y);
        if (expected.nodes[i].is_leaf()) {
            CHECK(expected.nodes[i].fit.a == decoded.nodes[i].fit.a);
            CHECK(expected.nodes[i].fit.b == decoded.nodes[i].fit.b);
            CHECK(expected.nodes[i].fit.c == decoded.nodes[i].fit.c);
        } else {
            CHECK(expected.nodes[i].line == decoded.nodes[i].line);
        }
    }
}

}  // namespace

TEST_CASE("a forced leaf writes no structure bit") {
    // 8x8 tile: 64 px < default split threshold (128), so the leaf is forced
    GrayImage img(8, 8, 42);
    BuildParams params;
    CoeffQuantizer q;
    const AngleGrid grid = make_angle_grid(8, 8);
    auto [tree, stats] = build_tree(TileView(img), params, grid);
    REQUIRE(tree.node_count() == 1);
    CHECK(!tree.nodes[0].splittable);

    std::array<std::vector<std::uint64_t>, 3> hist = {
        std::vector<std::uint64_t>(q.a_index_max() - q.a_index_min() + 1, 0),
        std::vector<std::uint64_t>(q.b_index_max() - q.b_index_min() + 1, 0),
        std::vector<std::uint64_t>(q.c_index_max() - q.c_index_min() + 1, 0)};
    collect_leaf_symbols(tree, grid, params, q, hist);
    HuffmanModel model;
    model.code_a = CanonicalCode(huffman_code_lengths(hist[0]));
    model.code_b = CanonicalCode(huffman_code_lengths(hist[1]));
    model.code_c = CanonicalCode(huffman_code_lengths(hist[2]));

    BitWriter w;
    const std::int64_t bits = encode_tree(tree, grid, params, q, model, w);
    // single-symbol alphabets: one bit per coefficient, zero structure bits
    CHECK(bits == 3);

    BitReader r(w.bytes());
    const BspTree back = decode_tree(r, 8, 8, grid, params, q, model);
    CHECK(r.bits_read() == bits);
    check_trees_equal(tree, back, q);
}

TEST_CASE("structure bit and index width accounting for a single split") {
    CHECK(candidate_index_bits(1) == 0);
    CHECK(candidate_index_bits(2) == 1);
    CHECK(candidate_index_bits(100) == 7);
    CHECK(candidate_index_bits(128) == 7);
    CHECK(candidate_index_bits(129) == 8);

    // step image forces exactly one split at the configured threshold
    GrayImage img(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) img.at(x, y) = x < 8 ? 10 : 200;
    BuildParams params;
    params.partition_limit = 1;
    params.min_domain_pixels = 128;  // 128-px children are below the split threshold
    CoeffQuantizer q;
    const AngleGrid grid = make_angle_grid(16, 16);
    auto [tree, stats] = build_tree(TileView(img), params, grid);
    REQUIRE(tree.internal_count() == 1);

    const Region root = make_tile_region(16, 16);
    const auto cands = split_candidates(root, grid, params);
    const int width = candidate_index_bits(static_cast<int>(cands.size()));

    std::array<std::vector<std::uint64_t>, 3> hist = {
        std::vector<std::uint64_t>(q.a_index_max() - q.a_index_min() + 1, 0),
        std::vector<std::uint64_t>(q.b_index_max() - q.b_index_min() + 1, 0),
        std::vector<std::uint64_t>(q.c_index_max() - q.c_index_min() + 1, 0)};
    collect_leaf_symbols(tree, grid, params, q, hist);
    HuffmanModel model;
    model.code_a = CanonicalCode(huffman_code_lengths(hist[0]));
    model.code_b = CanonicalCode(huffman_code_lengths(hist[1]));
    model.code_c = CanonicalCode(huffman_code_lengths(hist[2]));

    std::int64_t leaf_payload = 0;
    for (const BspNode& node : tree.nodes) {
        if (!node.is_leaf()) continue;
        const QuantizedCoeffs qc = quantize_fit_at(node.fit, node.anchor_x, node.anchor_y, q);
        leaf_payload += model.code_a.length(qc.ia - q.a_index_min());
        leaf_payload += model.code_b.length(qc.ib - q.b_index_min());
        leaf_payload += model.code_c.length(qc.ic - q.c_index_min());
    }

    BitWriter w;
    const std::int64_t bits = encode_tree(tree, grid, params, q, model, w);
    CHECK(bits == 1 + width + leaf_payload);  // children leaves are forced

    BitReader r(w.bytes());
    const BspTree back = decode_tree(r, 16, 16, grid, params, q, model);
    CHECK(r.bits_read() == bits);
    check_trees_equal(tree, back, q);
}

TEST_CASE("tree codec round trip on random tiles") {
    for (std::uint32_t seed : {1u, 2u, 3u, 4u, 5u, 6u}) {
        TreeCodecFixture fx(20, 14, seed, 2, 8);
        const HuffmanModel model = fx.model();
        BitWriter w;
        const std::int64_t bits = encode_tree(fx.tree, fx.grid, fx.params, fx.quantizer, model, w);
        BitReader r(w.bytes());
        const BspTree back =
            decode_tree(r, 20, 14, fx.grid, fx.params, fx.quantizer, model);
        CHECK(r.bits_read() == bits);
        check_trees_equal(fx.tree, back, fx.quantizer);
    }
}

TEST_CASE("constant image compresses to under 64 bytes") {
    GrayImage img(64, 64, 200);
    EncodeConfig config;
    const EncodeResult enc = encode_image(img, config);
    CHECK(enc.bytes.size() < 64);
    CHECK(enc.forest.size() == 1);
    CHECK(enc.forest[0].node_count() == 1);

    const GrayImage back = decode_image(enc.bytes);
    CHECK(back == img);  // constant on the grid decodes exactly
}

TEST_CASE("a 256x256 image at tile 64 carries 16 tile payloads") {
    std::mt19937 rng(606);
    GrayImage img = test::random_image(rng, 256, 256);
    EncodeConfig config;
    config.lambda = 5.0;
    const EncodeResult enc = encode_image(img, config);
    CHECK(enc.forest.size() == 16);
    CHECK(enc.tile_bits.size() == 16);
    CHECK(enc.tile_stats.size() == 16);

    const DecodedStream dec = decode_forest(enc.bytes);
    CHECK(dec.forest.size() == 16);
    CHECK(dec.payload_bits == enc.payload_bits);
    for (int i = 0; i < 16; ++i) CHECK(dec.tile_bits[i] == enc.tile_bits[i]);

    const GrayImage out = decode_image(enc.bytes);
    CHECK(out.width == 256);
    CHECK(out.height == 256);
}

TEST_CASE("decoded image equals the encoder's quantized forest render") {
    std::mt19937 rng(919);
    const std::pair<int, int> sizes[] = {{32, 32}, {100, 64}, {96, 41}, {65, 65}, {1, 1}, {8, 8}};
    for (const auto& [w, h] : sizes) {
        GrayImage img = test::random_image(rng, w, h);
        EncodeConfig config;
        config.tile_size = 32;
        config.lambda = 2.0;
        const EncodeResult enc = encode_image(img, config);
        const GrayImage decoded = decode_image(enc.bytes);

        const TileLayout layout = make_tile_layout(w, h, config.tile_size);
        GrayImage reference(w, h);
        for (int i = 0; i < layout.count(); ++i) {
            const TileRect r = layout.tiles[i];
            const GrayImage tile = render(enc.forest[i]);
            for (int y = 0; y < r.h; ++y)
                for (int x = 0; x < r.w; ++x) reference.at(r.x0 + x, r.y0 + y) = tile.at(x, y);
        }
        CHECK(decoded == reference);
    }
}

TEST_CASE("encoding is deterministic across thread counts") {
    std::mt19937 rng(31415);
    GrayImage img = test::random_image(rng, 192, 128);
    EncodeConfig one;
    one.lambda = 3.0;
    one.threads = 1;
    EncodeConfig four = one;
    four.threads = 4;
    const EncodeResult a = encode_image(img, one);
    const EncodeResult b = encode_image(img, four);
    CHECK(a.bytes == b.bytes);
}

TEST_CASE("lambda bisection hits the target ratio") {
    std::mt19937 rng(112);
    // smooth image: random low-order surface plus mild noise, compressible
    GrayImage img(128, 128);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
            const double v = 120 + 60 * std::sin(x * 0.05) + 40 * std::cos(y * 0.03) +
                             static_cast<int>(rng() % 7);
            img.at(x, y) = quantize_intensity(v);
        }
    EncodeConfig config;
    config.target_ratio = 24.0;
    const EncodeResult enc = encode_image(img, config);
    CHECK(enc.target_reached);
    CHECK(enc.achieved_ratio >= 24.0 * 0.98);
    const GrayImage decoded = decode_image(enc.bytes);
    CHECK(psnr(img, decoded) > 20.0);
}

TEST_CASE("truncated and corrupted streams fail loudly, never crash") {
    std::mt19937 rng(2222);
    GrayImage img = test::random_image(rng, 64, 48);
    EncodeConfig config;
    config.tile_size = 32;
    config.lambda = 1.0;
    const EncodeResult enc = encode_image(img, config);

    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, enc.bytes.size() / 2,
                            enc.bytes.size() - 1}) {
        std::vector<std::uint8_t> trunc(enc.bytes.begin(), enc.bytes.begin() + cut);
        CHECK_THROWS_AS(decode_image(trunc), CorruptStreamError);
    }

    int failures = 0, successes = 0;
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<std::uint8_t> fuzzed = enc.bytes;
        const std::size_t bit = rng() % (fuzzed.size() * 8);
        fuzzed[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        try {
            const GrayImage out = decode_image(fuzzed);
            CHECK(out.width >= 1);
            ++successes;
        } catch (const CorruptStreamError&) {
            ++failures;
        }
    }
    CHECK(failures + successes == 200);
}

TEST_CASE("decode reports the failing tile") {
    std::mt19937 rng(3333);
    GrayImage img = test::random_image(rng, 128, 64);
    EncodeConfig config;
    config.lambda = 0.5;
    const EncodeResult enc = encode_image(img, config);
    // chop mid-payload: the error must carry a tile index
    std::vector<std::uint8_t> trunc(enc.bytes.begin(), enc.bytes.end() - 2);
    try {
        decode_image(trunc);
        FAIL("expected CorruptStreamError");
    } catch (const CorruptStreamError& e) {
        CHECK(e.tile_index >= 0);
        CHECK(std::string(e.what()).find("tile") != std::string::npos);
    }
}
