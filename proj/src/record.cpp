#include "poolaudit/record.hpp"

#include "poolaudit/error.hpp"
#include "poolaudit/url.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>

namespace poolaudit {
namespace {

using nlohmann::json;

std::optional<std::uint32_t> optional_row(const json& obj, const char* field) {
    const auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0 ||
        it->get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
        throw RecordError(std::string("field '") + field + "' is not a row index");
    }
    return static_cast<std::uint32_t>(it->get<std::int64_t>());
}

const std::string& required_string(const json& obj, const char* field) {
    const auto it = obj.find(field);
    if (it == obj.end() || !it->is_string()) {
        throw RecordError(std::string("missing string field '") + field + "'");
    }
    return it->get_ref<const std::string&>();
}

double finite_number(const json& value, const char* field) {
    if (!value.is_number()) {
        throw RecordError(std::string("field '") + field + "' is not a number");
    }
    const double v = value.get<double>();
    if (!std::isfinite(v)) {
        throw RecordError(std::string("field '") + field + "' is not finite");
    }
    return v;
}

SampleRecord record_from_json(const json& obj) {
    if (!obj.is_object()) {
        throw RecordError("record is not a JSON object");
    }
    SampleRecord rec;
    rec.uid = required_string(obj, "uid");
    if (rec.uid.empty()) {
        throw RecordError("empty uid");
    }
    rec.url = required_string(obj, "url");
    if (!parse_url(rec.url)) {
        throw RecordError("invalid url");
    }
    rec.text = required_string(obj, "text");

    if (const auto it = obj.find("clip_score"); it != obj.end() && !it->is_null()) {
        const double s = finite_number(*it, "clip_score");
        if (s < -1.0 || s > 1.0) {
            throw RecordError("score out of range");
        }
        rec.clip_score = s;
    }
    rec.embedding_image = optional_row(obj, "embedding_image");
    rec.embedding_text = optional_row(obj, "embedding_text");

    if (const auto it = obj.find("face_boxes"); it != obj.end() && !it->is_null()) {
        if (!it->is_array()) {
            throw RecordError("face_boxes is not an array");
        }
        std::vector<FaceBox> boxes;
        for (const auto& b : *it) {
            if (!b.is_object() || !b.contains("x") || !b.contains("y") || !b.contains("w") ||
                !b.contains("h")) {
                throw RecordError("face box needs x, y, w, h");
            }
            FaceBox box;
            box.x = finite_number(b["x"], "x");
            box.y = finite_number(b["y"], "y");
            box.w = finite_number(b["w"], "w");
            box.h = finite_number(b["h"], "h");
            if (box.w <= 0 || box.h <= 0) {
                throw RecordError("face box dimensions must be positive");
            }
            box.embedding = optional_row(b, "embedding");
            boxes.push_back(box);
        }
        rec.face_boxes = std::move(boxes);
    }

    if (const auto it = obj.find("language"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) {
            throw RecordError("language is not a string");
        }
        rec.language = it->get<std::string>();
    }
    return rec;
}

json parse_json_line(std::string_view line) {
    json obj = json::parse(line.begin(), line.end(), nullptr, false);
    if (obj.is_discarded()) {
        throw RecordError("malformed JSON");
    }
    return obj;
}

json record_to_json(const SampleRecord& rec) {
    json obj;
    obj["uid"] = rec.uid;
    obj["url"] = rec.url;
    obj["text"] = rec.text;
    if (rec.clip_score) {
        obj["clip_score"] = *rec.clip_score;
    }
    if (rec.embedding_image) {
        obj["embedding_image"] = *rec.embedding_image;
    }
    if (rec.embedding_text) {
        obj["embedding_text"] = *rec.embedding_text;
    }
    if (rec.face_boxes) {
        json boxes = json::array();
        for (const auto& b : *rec.face_boxes) {
            json jb{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
            if (b.embedding) {
                jb["embedding"] = *b.embedding;
            }
            boxes.push_back(std::move(jb));
        }
        obj["face_boxes"] = std::move(boxes);
    }
    if (rec.language) {
        obj["language"] = *rec.language;
    }
    return obj;
}

} // namespace

SampleRecord parse_record(std::string_view line) {
    return record_from_json(parse_json_line(line));
}

ScoredRecord parse_scored_record(std::string_view line) {
    const json obj = parse_json_line(line);
    ScoredRecord out;
    out.record = record_from_json(obj);
    const auto score = obj.find("score");
    const auto passed = obj.find("passed");
    if (score == obj.end() || passed == obj.end() || !passed->is_boolean()) {
        throw RecordError("outcome line needs 'score' and boolean 'passed'");
    }
    out.score = finite_number(*score, "score");
    out.passed = passed->get<bool>();
    return out;
}

std::string format_record(const SampleRecord& record) {
    return record_to_json(record).dump();
}

std::string format_scored_record(const ScoredRecord& scored) {
    json obj = record_to_json(scored.record);
    obj["score"] = scored.score;
    obj["passed"] = scored.passed;
    return obj.dump();
}

} // namespace poolaudit
