#pragma once

// Engine record traits for the row types that cross shuffles and reductions.

#include "drmob/core.hpp"
#include "drmob/engine/schema.hpp"

namespace drmob::engine {

template <>
struct RecordTraits<Ping> {
    static const Schema<Ping>& schema() {
        static const Schema<Ping> s({
            {"user_id", FieldType::string, [](const Ping& p, KeyEncoder& k) { k.add(p.user_id); }},
            {"timestamp", FieldType::int64, [](const Ping& p, KeyEncoder& k) { k.add(p.timestamp); }},
            {"lat", FieldType::float64, [](const Ping& p, KeyEncoder& k) { k.add(p.lat); }},
            {"lon", FieldType::float64, [](const Ping& p, KeyEncoder& k) { k.add(p.lon); }},
        });
        return s;
    }
    static void encode(const Ping& p, ByteWriter& w) {
        w.put_string(p.user_id);
        w.put(p.timestamp);
        w.put(p.lat);
        w.put(p.lon);
        w.put_optional(p.accuracy_m);
    }
    static Ping decode(ByteReader& r) {
        Ping p;
        p.user_id = r.get_string();
        p.timestamp = r.get<std::int64_t>();
        p.lat = r.get<double>();
        p.lon = r.get<double>();
        p.accuracy_m = r.get_optional<double>();
        return p;
    }
};

}  // namespace drmob::engine
