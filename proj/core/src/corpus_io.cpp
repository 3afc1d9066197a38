#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "maescale/corpus.hpp"
#include "maescale/error.hpp"
#include <json.hpp>

namespace maescale {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kManifestFile = "manifest.jsonl";
constexpr const char* kPixelFile = "pixels.f32";
constexpr const char* kMetaFile = "corpus.json";

ordered_json record_to_json(const ImageRecord& rec) {
    ordered_json j;
    j["id"] = rec.id;
    j["source"] = rec.source.to_string();
    j["width"] = rec.width;
    j["height"] = rec.height;
    j["label"] = rec.label ? ordered_json(*rec.label) : ordered_json(nullptr);
    j["gen_seed"] = rec.gen_seed ? ordered_json(*rec.gen_seed) : ordered_json(nullptr);
    return j;
}

}  // namespace

void save_corpus(const CorpusManifest& manifest, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create corpus directory " + dir.string() + ": " + ec.message());

    int channels = 1;
    if (!manifest.empty()) channels = manifest.records.front().channels;

    ordered_json meta;
    meta["class_count"] = manifest.class_count;
    meta["channels"] = channels;
    meta["image_count"] = manifest.size();
    ordered_json mix = ordered_json::array();
    for (const auto& e : manifest.mixture.entries()) {
        mix.push_back({{"source", e.source.to_string()}, {"proportion", e.proportion}});
    }
    meta["mixture"] = mix;
    write_text_file(dir / kMetaFile, meta.dump(2) + "\n");

    std::ofstream lines(dir / kManifestFile, std::ios::binary | std::ios::trunc);
    std::ofstream pixels(dir / kPixelFile, std::ios::binary | std::ios::trunc);
    if (!lines || !pixels) throw IoError("cannot write corpus files in " + dir.string());
    for (const auto& rec : manifest.records) {
        if (rec.channels != channels) {
            throw DomainError("corpus mixes channel counts; record " + rec.id);
        }
        lines << record_to_json(rec).dump() << '\n';
        write_f32_le(pixels, rec.pixels);
    }
    if (!lines || !pixels) throw IoError("short write in corpus directory " + dir.string());
}

CorpusManifest load_corpus(const fs::path& dir) {
    const ordered_json meta = [&] {
        try {
            return ordered_json::parse(read_text_file(dir / kMetaFile));
        } catch (const ordered_json::exception& e) {
            throw IoError("malformed " + (dir / kMetaFile).string() + ": " + e.what());
        }
    }();

    CorpusManifest manifest;
    int channels = 1;
    try {
        manifest.class_count = meta.at("class_count").get<int>();
        channels = meta.value("channels", 1);
        std::vector<MixtureEntry> entries;
        for (const auto& e : meta.at("mixture")) {
            entries.push_back({SourceTag::parse(e.at("source").get<std::string>()),
                               e.at("proportion").get<double>()});
        }
        manifest.mixture = MixtureSpec(std::move(entries));
    } catch (const ordered_json::exception& e) {
        throw IoError("malformed " + (dir / kMetaFile).string() + ": " + e.what());
    }

    std::ifstream lines(dir / kManifestFile, std::ios::binary);
    std::ifstream pixels(dir / kPixelFile, std::ios::binary);
    if (!lines) throw IoError("cannot read " + (dir / kManifestFile).string());
    if (!pixels) throw IoError("cannot read " + (dir / kPixelFile).string());

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.empty()) continue;
        ImageRecord rec;
        try {
            const auto j = ordered_json::parse(line);
            rec.id = j.at("id").get<std::string>();
            rec.source = SourceTag::parse(j.at("source").get<std::string>());
            rec.width = j.at("width").get<int>();
            rec.height = j.at("height").get<int>();
            if (!j.at("label").is_null()) rec.label = j.at("label").get<int>();
            if (!j.at("gen_seed").is_null()) rec.gen_seed = j.at("gen_seed").get<std::uint64_t>();
        } catch (const ordered_json::exception& e) {
            throw IoError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        if (rec.width < 1 || rec.height < 1) {
            throw IoError("manifest line " + std::to_string(line_no) + ": bad dimensions");
        }
        rec.channels = channels;
        rec.pixels.resize(static_cast<std::size_t>(rec.width) * rec.height * channels);
        if (!read_f32_le(pixels, rec.pixels)) {
            throw IoError("pixel sidecar ends before record " + rec.id);
        }
        manifest.records.push_back(std::move(rec));
    }
    char extra;
    if (pixels.read(&extra, 1)) {
        throw IoError("pixel sidecar has trailing data beyond the last record");
    }
    return manifest;
}

}  // namespace maescale
