// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/sequence.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gdstrack {

namespace fs = std::filesystem;

namespace {

std::string frame_name(int index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d.%s", index, ext);
    return buf;
}

std::vector<double> parse_csv_line(const std::string& line) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(std::stod(field));
    return out;
}

}  // namespace

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    std::string s = buf;
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    if (s == "-0") s = "0";
    return s;
}

void validate_record(const SequenceRecord& record) {
    if (record.rgb_frames.size() != record.ir_frames.size()) {
        throw std::invalid_argument("sequence: rgb and ir frame counts differ");
    }
    for (std::size_t i = 0; i < record.rgb_frames.size(); ++i) {
        const Image& rgb = record.rgb_frames[i];
        const Image& ir = record.ir_frames[i];
        if (rgb.channels != 3 || ir.channels != 1) throw std::invalid_argument("sequence: bad channel counts");
        if (rgb.width != ir.width || rgb.height != ir.height) throw std::invalid_argument("sequence: frame sizes differ");
        if (rgb.width != record.width() || rgb.height != record.height()) {
            throw std::invalid_argument("sequence: frame size changes within sequence");
        }
    }
    for (const auto& b : record.gt_track) {
        if (!b.valid() || !b.inside(record.width(), record.height())) {
            throw std::invalid_argument("sequence: ground-truth box outside frame");
        }
    }
    for (const auto& l : record.pseudo_track) {
        if (!(l.confidence >= 0.0 && l.confidence <= 1.0)) throw std::invalid_argument("sequence: confidence outside [0,1]");
        if (!l.box.valid() || !l.box.inside(record.width(), record.height())) {
            throw std::invalid_argument("sequence: pseudo-label box outside frame");
        }
    }
}

void write_boxes(const std::vector<BoundingBox>& boxes, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& b : boxes) {
        out << format_number(b.x) << ',' << format_number(b.y) << ',' << format_number(b.w) << ',' << format_number(b.h)
            << '\n';
    }
}

std::vector<BoundingBox> read_boxes(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<BoundingBox> boxes;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto v = parse_csv_line(line);
        if (v.size() < 4) throw std::runtime_error("malformed box line in " + path.string() + ": " + line);
        boxes.push_back(BoundingBox{v[0], v[1], v[2], v[3]});
    }
    return boxes;
}

void write_pseudo_labels(const std::vector<PseudoLabel>& labels, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& l : labels) {
        char conf[32];
        std::snprintf(conf, sizeof(conf), "%.4f", l.confidence);
        out << format_number(l.box.x) << ',' << format_number(l.box.y) << ',' << format_number(l.box.w) << ','
            << format_number(l.box.h) << ',' << conf << '\n';
    }
}

std::vector<PseudoLabel> read_pseudo_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<PseudoLabel> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto v = parse_csv_line(line);
        if (v.size() != 5) throw std::runtime_error("malformed pseudo-label line: " + line);
        labels.push_back(PseudoLabel{BoundingBox{v[0], v[1], v[2], v[3]}, v[4], Modality::rgb});
    }
    return labels;
}

void save_sequence(const SequenceRecord& record, const fs::path& dir) {
    validate_record(record);
    fs::create_directories(dir / "rgb");
    fs::create_directories(dir / "ir");
    for (int i = 0; i < record.num_frames(); ++i) {
        write_pnm(record.rgb_frames[static_cast<std::size_t>(i)], dir / "rgb" / frame_name(i, "ppm"));
        write_pnm(record.ir_frames[static_cast<std::size_t>(i)], dir / "ir" / frame_name(i, "pgm"));
    }
    if (!record.gt_track.empty()) write_boxes(record.gt_track, dir / "groundtruth.txt");
    if (!record.pseudo_track.empty()) write_pseudo_labels(record.pseudo_track, dir / "pseudolabel.txt");
}

SequenceRecord load_sequence(const fs::path& dir, LoadOptions options) {
    SequenceRecord record;
    for (int i = 0;; ++i) {
        const fs::path rgb = dir / "rgb" / frame_name(i, "ppm");
        const fs::path ir = dir / "ir" / frame_name(i, "pgm");
        if (!fs::exists(rgb) || !fs::exists(ir)) break;
        record.rgb_frames.push_back(read_pnm(rgb));
        record.ir_frames.push_back(read_pnm(ir));
    }
    if (record.rgb_frames.empty()) throw std::runtime_error("no frames found in " + dir.string());
    if (options.ground_truth) {
        record.gt_track = read_boxes(dir / "groundtruth.txt");
        if (record.gt_track.size() != record.rgb_frames.size()) {
            throw std::runtime_error("groundtruth.txt length does not match frame count in " + dir.string());
        }
    }
    if (options.pseudo_labels && fs::exists(dir / "pseudolabel.txt")) {
        record.pseudo_track = read_pseudo_labels(dir / "pseudolabel.txt");
        if (record.pseudo_track.size() != record.rgb_frames.size()) {
            throw std::runtime_error("pseudolabel.txt length does not match frame count in " + dir.string());
        }
    }
    validate_record(record);
    return record;
}

}  // namespace gdstrack
