#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace debias {

struct Error : std::runtime_error {
    Error(std::string code, const std::string& msg)
        : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

enum class Split { train, eval, benchmark };
enum class XnrKind { continuous, categorical };

const char* to_string(Split s);
const char* to_string(XnrKind k);
Split split_from_string(const std::string& s);
XnrKind xnr_kind_from_string(const std::string& s);

// One logged (user, item, features, exposure, click) event.
struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    std::vector<double> x_r;  // preference-relevant features
    double x_nr = 0.0;        // bias attribute (label code when categorical)
    int exposure = 1;
    int click = 0;

    bool operator==(const InteractionRecord&) const = default;
};

struct Dataset {
    std::vector<InteractionRecord> records;
    int feature_dim = 0;
    Split split = Split::train;
    XnrKind x_nr_kind = XnrKind::continuous;
    std::vector<std::string> x_nr_labels;  // categorical code -> label

    std::size_t size() const { return records.size(); }
};

// One stratum assignment per record over the bias attribute.
struct BinAssignment {
    std::vector<int> bin_index;     // in [0, k)
    int k = 1;                      // effective stratum count
    int requested_k = 1;
    std::vector<double> bin_edges;  // continuous case; sorted, size k-1
    bool degenerate = false;        // fewer distinct values than requested_k

    std::vector<std::size_t> counts() const;
};

struct Violation {
    std::size_t row;  // npos for dataset-level rules
    std::string rule;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    bool operator==(const Violation&) const = default;
};

// Pure check of every dataset invariant; violations are data, not errors.
std::vector<Violation> validate(const Dataset& dataset);

// Per-column affine transform (x - mean) / scale.
struct StandardizeTransform {
    std::vector<double> mean;
    std::vector<double> scale;

    Dataset apply(const Dataset& dataset) const;
};

// Standardizes x_r columns to mean 0, population sd 1. Zero-variance
// columns pass through with scale 1.
std::pair<Dataset, StandardizeTransform> standardize_features(const Dataset& dataset);

}  // namespace debias
