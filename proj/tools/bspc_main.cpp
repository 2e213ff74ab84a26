// bspc: BSP-tree grayscale image codec command line.
//
//   bspc encode  input.pgm output.bsp [--tile N] [--limit N] [--lambda L |
//                --target-ratio R] [--step-a S] [--step-b S] [--step-c S]
//                [--threads N]
//   bspc decode  input.bsp output.pgm [--compare original.pgm]
//   bspc bench   input.pgm [--tile N] [--limits a,b,c] [--csv out.csv]
//   bspc inspect input.bsp [--map map.pgm]
//
// Results go to stdout, diagnostics to stderr; CSV/PGM/stream payloads are
// only ever written to files.

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "bspc/codec.hpp"
#include "bspc/harness.hpp"
#include "bspc/image.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitCorrupt = 3;

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bspc::IoError("cannot open input file: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw bspc::IoError("cannot open output file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw bspc::IoError("failed writing " + path);
}

int cmd_encode(const std::string& input, const std::string& output, bspc::EncodeConfig config) {
    const bspc::GrayImage image = bspc::load_image(input);
    const bspc::EncodeResult result = bspc::encode_image(image, config);
    write_file(output, result.bytes);

    std::printf("input: %s (%dx%d, %d bytes raw)\n", input.c_str(), image.width, image.height,
                image.width * image.height);
    std::printf("stream: %s (%zu bytes, %" PRId64 " payload bits)\n", output.c_str(),
                result.bytes.size(), result.payload_bits);
    std::printf("ratio: %.4f (lambda %.6g%s)\n", result.achieved_ratio, result.lambda,
                result.target_reached ? "" : ", target unreachable");
    std::int64_t total_iterations = 0;
    for (const bspc::BuildStats& st : result.tile_stats) {
        std::printf("tile %d: iterations %" PRId64 ", lines %" PRId64 ", %.3fs, %" PRId64
                    " bits\n",
                    st.tile_index, st.iterations, st.lines_drawn, st.elapsed_seconds,
                    result.tile_bits[st.tile_index]);
        total_iterations += st.iterations;
    }
    std::printf("total iterations: %" PRId64 "\n", total_iterations);
    return 0;
}

int cmd_decode(const std::string& input, const std::string& output, const std::string& compare) {
    const std::vector<std::uint8_t> bytes = read_file(input);
    const bspc::GrayImage image = bspc::decode_image(bytes);
    bspc::save_pgm(image, output);
    std::printf("decoded %s -> %s (%dx%d)\n", input.c_str(), output.c_str(), image.width,
                image.height);
    if (!compare.empty()) {
        const bspc::GrayImage original = bspc::load_image(compare);
        std::printf("psnr_db: %.4f\n", bspc::psnr(original, image));
    }
    return 0;
}

int cmd_bench(const std::string& input, int tile, const std::vector<int>& limits,
              const std::string& csv_path) {
    const bspc::GrayImage image = bspc::load_image(input);
    const std::vector<bspc::BenchRow> rows = bspc::bench_sweep(image, tile, limits);
    std::printf("%10s %16s %12s %12s\n", "tile_size", "partition_limit", "iterations", "seconds");
    for (const bspc::BenchRow& r : rows)
        std::printf("%10d %16d %12" PRId64 " %12.6f\n", r.tile_size, r.partition_limit,
                    r.iterations, r.seconds);
    if (!csv_path.empty()) {
        bspc::write_bench_csv(rows, csv_path);
        std::fprintf(stderr, "wrote %s\n", csv_path.c_str());
    }
    return 0;
}

void partition_map_walk(const bspc::BspTree& tree, int idx, bspc::Region region,
                        const bspc::AngleGrid& grid, int& leaf_ordinal, bspc::GrayImage& out,
                        int x0, int y0) {
    const bspc::BspNode& node = tree.nodes[idx];
    if (node.is_leaf()) {
        const std::uint8_t gray = static_cast<std::uint8_t>((leaf_ordinal * 97 + 31) & 0xFF);
        ++leaf_ordinal;
        for (const bspc::PixelPoint& p : region.pixels) out.at(x0 + p.x, y0 + p.y) = gray;
        return;
    }
    auto [r0, r1] = bspc::split_region(region, node.line, grid);
    partition_map_walk(tree, node.child0, std::move(r0), grid, leaf_ordinal, out, x0, y0);
    partition_map_walk(tree, node.child1, std::move(r1), grid, leaf_ordinal, out, x0, y0);
}

int cmd_inspect(const std::string& input, const std::string& map_path) {
    const std::vector<std::uint8_t> bytes = read_file(input);
    const bspc::DecodedStream stream = bspc::decode_forest(bytes);
    const bspc::StreamHeader& h = stream.header;

    std::printf("magic: BSPC v%u\n", bspc::kStreamVersion);
    std::printf("image: %ux%u, tile size %u (%d tiles)\n", h.width, h.height, h.tile_size,
                stream.layout.count());
    std::printf("partition limit: %u\n", h.partition_limit);
    std::printf("lambda: %.6g\n", h.lambda);
    std::printf("quantizer steps: a %.8g, b %.8g, c %.8g\n", h.quantizer.step_a,
                h.quantizer.step_b, h.quantizer.step_c);
    std::printf("payload bits: %" PRId64 " (stream %zu bytes)\n", stream.payload_bits,
                bytes.size());
    for (int i = 0; i < stream.layout.count(); ++i) {
        const bspc::BspTree& t = stream.forest[i];
        std::printf("tile %d: %d nodes (%d leaves), depth %d, %" PRId64 " bits\n", i,
                    t.node_count(), t.leaf_count(), t.depth(), stream.tile_bits[i]);
    }

    if (!map_path.empty()) {
        bspc::GrayImage map(static_cast<int>(h.width), static_cast<int>(h.height));
        for (int i = 0; i < stream.layout.count(); ++i) {
            const bspc::TileRect r = stream.layout.tiles[i];
            const bspc::AngleGrid grid = bspc::make_angle_grid(r.w, r.h);
            int ordinal = 0;
            partition_map_walk(stream.forest[i], 0, bspc::make_tile_region(r.w, r.h), grid,
                               ordinal, map, r.x0, r.y0);
        }
        bspc::save_pgm(map, map_path);
        std::fprintf(stderr, "wrote %s\n", map_path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BSP-tree grayscale image codec"};
    app.require_subcommand(1);

    std::string input, output, compare, csv_path, map_path;
    bspc::EncodeConfig config;
    config.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    double target_ratio = 0.0;
    int tile = 64;
    std::vector<int> limits = {2000, 1000, 500, 250, 128, 64};

    CLI::App* enc = app.add_subcommand("encode", "compress a PGM/BMP image to a BSPC stream");
    enc->add_option("input", input, "input image (binary PGM or 8-bit BMP)")->required();
    enc->add_option("output", output, "output stream file")->required();
    enc->add_option("--tile", config.tile_size, "tile size in pixels")->capture_default_str();
    enc->add_option("--limit", config.partition_limit, "partition limit in pixels")
        ->capture_default_str();
    enc->add_option("--lambda", config.lambda, "rate-distortion multiplier");
    enc->add_option("--target-ratio", target_ratio, "bisect lambda to hit this compression ratio");
    enc->add_option("--step-a", config.quantizer.step_a, "quantizer step for A");
    enc->add_option("--step-b", config.quantizer.step_b, "quantizer step for B");
    enc->add_option("--step-c", config.quantizer.step_c, "quantizer step for C");
    enc->add_option("--threads", config.threads, "tile build parallelism")->capture_default_str();

    CLI::App* dec = app.add_subcommand("decode", "decompress a BSPC stream to a PGM");
    dec->add_option("input", input, "input stream file")->required();
    dec->add_option("output", output, "output PGM file")->required();
    dec->add_option("--compare", compare, "print PSNR against this original image");

    CLI::App* ben = app.add_subcommand("bench", "tree-generation sweep over partition limits");
    ben->add_option("input", input, "input image")->required();
    ben->add_option("--tile", tile, "tile size in pixels")->capture_default_str();
    ben->add_option("--limits", limits, "partition limits to sweep")
        ->delimiter(',')
        ->capture_default_str();
    ben->add_option("--csv", csv_path, "also write rows to this CSV file");

    CLI::App* ins = app.add_subcommand("inspect", "print stream structure");
    ins->add_option("input", input, "input stream file")->required();
    ins->add_option("--map", map_path, "write a leaf partition map PGM");

    CLI11_PARSE(app, argc, argv);

    try {
        if (enc->parsed()) {
            config.target_ratio = target_ratio;
            return cmd_encode(input, output, config);
        }
        if (dec->parsed()) return cmd_decode(input, output, compare);
        if (ben->parsed()) return cmd_bench(input, tile, limits, csv_path);
        if (ins->parsed()) return cmd_inspect(input, map_path);
    } catch (const bspc::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitBadInput;
    } catch (const bspc::CorruptStreamError& e) {
        std::fprintf(stderr, "error: corrupt stream: %s\n", e.what());
        return kExitCorrupt;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return 0;
}
