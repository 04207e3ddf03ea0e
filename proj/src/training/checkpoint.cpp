#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "fgn/training.hpp"

namespace fgn {

namespace {

constexpr char kMagic[4] = {'F', 'G', 'N', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void append_u64(std::string& out, std::uint64_t value) {
    char bytes[8];
    std::memcpy(bytes, &value, 8);
    out.append(bytes, 8);
}

std::uint64_t read_u64(const std::string& bytes, std::size_t offset) {
    std::uint64_t value = 0;
    std::memcpy(&value, bytes.data() + offset, 8);
    return value;
}

}  // namespace

std::unique_ptr<Forecaster<float>> Checkpoint::restore() const {
    auto net = build_model<float>(model, 0);
    if (net->parameter_count() != values.size()) {
        throw CheckpointLengthError("checkpoint length mismatch: expected " + std::to_string(net->parameter_count()) +
                                    " values, found " + std::to_string(values.size()));
    }
    std::size_t offset = 0;
    for (const auto& p : net->parameters()) {
        Tensor<float> handle = p.tensor;
        auto dst = handle.mutable_data();
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
                  values.begin() + static_cast<std::ptrdiff_t>(offset + dst.size()), dst.begin());
        offset += dst.size();
    }
    return net;
}

Checkpoint make_checkpoint(const Forecaster<float>& model, const DataConfig& data,
                           const NormalizationStats& normalization) {
    Checkpoint c{model.config(), data, normalization, {}};
    c.values.reserve(model.parameter_count());
    for (const auto& p : model.parameters()) {
        c.values.insert(c.values.end(), p.tensor.data().begin(), p.tensor.data().end());
    }
    return c;
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
    const nlohmann::json header = {{"model", checkpoint.model.to_json()},
                                   {"data", checkpoint.data.to_json()},
                                   {"normalization", checkpoint.normalization.to_json()}};
    const std::string text = header.dump();
    std::string out(kMagic, 4);
    append_u64(out, text.size());
    out += text;
    const std::size_t offset = out.size();
    out.resize(offset + 4 * checkpoint.values.size());
    std::memcpy(out.data() + offset, checkpoint.values.data(), 4 * checkpoint.values.size());
    append_u64(out, checkpoint.values.size());
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointMagicError("not a checkpoint: missing FGN1 magic");
    }
    if (bytes.size() < 12) {
        throw CheckpointTruncatedError("checkpoint truncated inside the header length");
    }
    const std::uint64_t text_size = read_u64(bytes, 4);
    if (text_size > bytes.size() - 12 || bytes.size() - 12 - text_size < 8) {
        throw CheckpointTruncatedError("checkpoint truncated: header declares " + std::to_string(text_size) +
                                       " bytes of JSON but the file has " + std::to_string(bytes.size()) +
                                       " bytes in total");
    }
    Checkpoint c;
    try {
        const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(text_size));
        c.model = ModelConfig::from_json(header.at("model"));
        c.data = DataConfig::from_json(header.at("data"));
        c.normalization = NormalizationStats::from_json(header.at("normalization"));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointTruncatedError(std::string("checkpoint header is not valid JSON: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint header has an invalid config: ") + e.what());
    } catch (const DataError& e) {
        throw CheckpointError(std::string("checkpoint header has invalid statistics: ") + e.what());
    }

    const std::size_t blob_begin = 12 + text_size;
    const std::size_t blob_bytes = bytes.size() - blob_begin - 8;
    if (blob_bytes % 4 != 0) {
        throw CheckpointTruncatedError("checkpoint value blob has " + std::to_string(blob_bytes) +
                                       " bytes, not a whole number of float32 values");
    }
    const std::size_t found = blob_bytes / 4;
    const std::uint64_t trailer = read_u64(bytes, bytes.size() - 8);
    const std::size_t expected = build_model<float>(c.model, 0)->parameter_count();
    if (found != expected || trailer != expected) {
        throw CheckpointLengthError("checkpoint length mismatch: expected " + std::to_string(expected) +
                                    " values, found " + std::to_string(found) + " (trailer says " +
                                    std::to_string(trailer) + ")");
    }
    c.values.resize(found);
    std::memcpy(c.values.data(), bytes.data() + blob_begin, blob_bytes);
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    const std::string bytes = encode_checkpoint(checkpoint);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw CheckpointError("write failed for checkpoint '" + path.string() + "'");
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace fgn
