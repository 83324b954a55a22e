#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "drmob/engine/codec.hpp"
#include "drmob/errors.hpp"

namespace drmob::engine {

enum class FieldType { string, int64, float64, boolean };

template <typename Row>
struct Field {
    std::string name;
    FieldType type;
    std::function<void(const Row&, KeyEncoder&)> encode_key;
};

/// Key extractor built from a comma-separated list of field names.
template <typename Row>
class KeyFunction {
public:
    KeyFunction() = default;
    explicit KeyFunction(std::vector<const Field<Row>*> fields) : fields_(std::move(fields)) {}

    void operator()(const Row& row, KeyEncoder& enc) const {
        enc.clear();
        for (const auto* f : fields_) f->encode_key(row, enc);
    }
    std::string operator()(const Row& row) const {
        KeyEncoder enc;
        (*this)(row, enc);
        return enc.take();
    }

private:
    std::vector<const Field<Row>*> fields_;
};

template <typename Row>
class Schema {
public:
    Schema(std::vector<Field<Row>> fields) : fields_(std::move(fields)) {}

    const std::vector<Field<Row>>& fields() const noexcept { return fields_; }

    const Field<Row>& field(std::string_view name) const {
        auto it = std::find_if(fields_.begin(), fields_.end(),
                               [&](const auto& f) { return f.name == name; });
        if (it == fields_.end())
            throw SchemaError("unknown field '" + std::string(name) + "'");
        return *it;
    }

    /// `spec` is one field name or several joined by commas, e.g. "tile_id,date".
    KeyFunction<Row> key(std::string_view spec) const {
        std::vector<const Field<Row>*> out;
        std::size_t pos = 0;
        while (pos <= spec.size()) {
            auto comma = spec.find(',', pos);
            if (comma == std::string_view::npos) comma = spec.size();
            out.push_back(&field(spec.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        return KeyFunction<Row>(std::move(out));
    }

private:
    std::vector<Field<Row>> fields_;
};

/// Specialize for every record type that crosses a shuffle or reduce:
///
///   template <> struct RecordTraits<MyRow> {
///       static const Schema<MyRow>& schema();
///       static void encode(const MyRow&, ByteWriter&);
///       static MyRow decode(ByteReader&);
///   };
template <typename Row>
struct RecordTraits;

template <typename Row>
concept Record = requires(const Row& r, ByteWriter& w, ByteReader& rd) {
    { RecordTraits<Row>::schema() } -> std::convertible_to<const Schema<Row>&>;
    RecordTraits<Row>::encode(r, w);
    { RecordTraits<Row>::decode(rd) } -> std::same_as<Row>;
};

}  // namespace drmob::engine
