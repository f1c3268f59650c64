#include <png.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mdb/digest.hpp"
#include "mdb/error.hpp"
#include "mdb/synthgrid.hpp"

namespace mdb {
namespace {

constexpr std::string_view kHeader = "path,class_id,domain_id,pool";

Image read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw LoadError("cannot decode PNG '" + path.string() + "': " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw LoadError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    const int w = static_cast<int>(image.width);
    const int h = static_cast<int>(image.height);
    Image out(3, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(c, y, x) = static_cast<float>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
            }
        }
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    std::vector<png_byte> buf(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int ch = img.channels == 1 ? 0 : c;
                const float v = std::clamp(img.at(ch, y, x), 0.0f, 1.0f);
                buf[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
                    static_cast<png_byte>(std::lround(v * 255.0f));
            }
        }
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw LoadError("cannot write PNG '" + path.string() + "': " + image.message);
    }
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

int parse_index(const std::string& s, std::size_t row, std::string_view what) {
    int v = -1;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0) {
        throw LoadError("manifest row " + std::to_string(row) + ": invalid " + std::string(what) +
                        " '" + s + "'");
    }
    return v;
}

struct Row {
    std::string path;
    int class_id;
    int domain_id;
    Pool pool;
    std::size_t line;
};

void check_contiguous(const std::map<int, std::size_t>& first_row, std::string_view what) {
    int expected = 0;
    for (const auto& [id, row] : first_row) {
        if (id != expected) {
            throw LoadError("manifest row " + std::to_string(row) + ": " + std::string(what) + " " +
                            std::to_string(id) + " leaves index " + std::to_string(expected) +
                            " unused");
        }
        ++expected;
    }
}

}  // namespace

DatasetGrid load_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw LoadError("cannot open manifest '" + manifest.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw LoadError("manifest '" + manifest.string() + "': no samples");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line != kHeader) {
        throw LoadError("manifest '" + manifest.string() + "': header must be '" +
                        std::string(kHeader) + "'");
    }

    std::vector<Row> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 4 || fields[0].empty()) {
            throw LoadError("manifest row " + std::to_string(lineno) + ": expected 4 fields");
        }
        Row r{fields[0], parse_index(fields[1], lineno, "class_id"),
              parse_index(fields[2], lineno, "domain_id"), Pool::Train, lineno};
        try {
            r.pool = parse_pool(fields[3]);
        } catch (const ArgumentError&) {
            throw LoadError("manifest row " + std::to_string(lineno) + ": unknown pool '" +
                            fields[3] + "'");
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw LoadError("manifest '" + manifest.string() + "': no samples");

    std::map<int, std::size_t> classes, domains;
    for (const Row& r : rows) {
        classes.emplace(r.class_id, r.line);
        domains.emplace(r.domain_id, r.line);
    }
    check_contiguous(classes, "class_id");
    check_contiguous(domains, "domain_id");
    const int n_classes = static_cast<int>(classes.size());
    const int n_domains = static_cast<int>(domains.size());

    const std::filesystem::path base = manifest.parent_path();
    std::vector<DatasetGrid::CellPools> cells(static_cast<std::size_t>(n_classes) * n_domains);
    for (const Row& r : rows) {
        const std::filesystem::path p = std::filesystem::path(r.path).is_absolute() ? std::filesystem::path(r.path) : base / r.path;
        if (!std::filesystem::exists(p)) {
            throw LoadError("manifest row " + std::to_string(r.line) + ": missing file '" + r.path + "'");
        }
        Sample s;
        try {
            s.pixels = read_png(p);
        } catch (const LoadError& e) {
            throw LoadError("manifest row " + std::to_string(r.line) + ": " + e.what());
        }
        s.class_id = r.class_id;
        s.domain_id = r.domain_id;
        s.uid = digest_of(r.path);
        cells[static_cast<std::size_t>(r.class_id) * n_domains + r.domain_id][static_cast<int>(r.pool)]
            .push_back(std::move(s));
    }
    try {
        return DatasetGrid(n_classes, n_domains, std::move(cells));
    } catch (const ArgumentError& e) {
        throw LoadError(std::string("manifest '") + manifest.string() + "': " + e.what());
    }
}

std::filesystem::path save_manifest(const DatasetGrid& grid, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    const fs::path manifest = dir / "manifest.csv";
    std::ofstream out(manifest, std::ios::trunc);
    if (!out) throw LoadError("cannot write manifest '" + manifest.string() + "'");
    out << kHeader << '\n';
    for (int c = 0; c < grid.n_classes(); ++c) {
        for (int d = 0; d < grid.n_domains(); ++d) {
            for (Pool p : kAllPools) {
                const auto& pool = grid.pool(c, d, p);
                for (std::size_t i = 0; i < pool.size(); ++i) {
                    char name[96];
                    std::snprintf(name, sizeof(name), "images/c%02d_d%02d_%s_%05zu.png", c, d,
                                  std::string(pool_name(p)).c_str(), i);
                    write_png(dir / name, pool[i].pixels);
                    out << name << ',' << c << ',' << d << ',' << pool_name(p) << '\n';
                }
            }
        }
    }
    return manifest;
}

}  // namespace mdb
