#pragma once

// JSON mapping of the configuration types. Parsing rejects unknown keys;
// missing keys keep their defaults.

#include "json.hpp"
#include "lmcal/corpus.hpp"
#include "lmcal/error.hpp"
#include "lmcal/encoder.hpp"
#include "lmcal/sampler.hpp"
#include "lmcal/tuning.hpp"

namespace lmcal {

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const Attachments& a);
void from_json(const nlohmann::json& j, Attachments& a);
void to_json(nlohmann::json& j, const SyntheticTaskSpec& s);
void from_json(const nlohmann::json& j, SyntheticTaskSpec& s);
void to_json(nlohmann::json& j, const MethodConfig& m);
void from_json(const nlohmann::json& j, MethodConfig& m);
void to_json(nlohmann::json& j, const PretrainConfig& p);
void from_json(const nlohmann::json& j, PretrainConfig& p);
void to_json(nlohmann::json& j, const SamplerConfig& s);
void from_json(const nlohmann::json& j, SamplerConfig& s);

void to_json(nlohmann::json& j, Method m);
void from_json(const nlohmann::json& j, Method& m);

namespace detail {

/// Reads or writes a struct through a visitor `fields(obj, f)` calling
/// f(key, member) for each member.
template <class T, class Fields>
void write_fields(nlohmann::json& j, const T& obj, Fields fields) {
    j = nlohmann::json::object();
    fields(const_cast<T&>(obj), [&](const char* key, auto& member) { j[key] = member; });
}

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& known, const char* what);

template <class T, class Fields>
void read_fields(const nlohmann::json& j, T& obj, Fields fields, const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
    std::vector<std::string> known;
    fields(obj, [&](const char* key, auto&) { known.emplace_back(key); });
    reject_unknown_keys(j, known, what);
    fields(obj, [&](const char* key, auto& member) {
        auto it = j.find(key);
        if (it == j.end()) return;
        try {
            it->get_to(member);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string(what) + "." + key + ": " + e.what());
        }
    });
}

} // namespace detail

} // namespace lmcal
