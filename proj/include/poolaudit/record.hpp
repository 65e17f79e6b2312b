#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace poolaudit {

struct FaceBox {
    double x = 0;
    double y = 0;
    double w = 0;
    double h = 0;
    std::optional<std::uint32_t> embedding;  // row in the face embedding space
};

// Metadata for one image/alt-text pair.
struct SampleRecord {
    std::string uid;
    std::string url;
    std::string text;
    std::optional<double> clip_score;
    std::optional<std::uint32_t> embedding_image;
    std::optional<std::uint32_t> embedding_text;
    std::optional<std::vector<FaceBox>> face_boxes;
    std::optional<std::string> language;
};

// A record together with its filter decision, as carried between stages.
struct ScoredRecord {
    SampleRecord record;
    double score = 0;
    bool passed = false;
};

// Parses one line of the line-delimited JSON record format. Unknown fields are
// ignored. Throws RecordError on malformed JSON or an invariant violation.
SampleRecord parse_record(std::string_view line);

// Parses a record line that additionally carries `score` and `passed`.
ScoredRecord parse_scored_record(std::string_view line);

std::string format_record(const SampleRecord& record);
std::string format_scored_record(const ScoredRecord& scored);

} // namespace poolaudit
