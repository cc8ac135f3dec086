#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "r2r/numkit.hpp"

namespace r2r {

// Insertion-ordered JSON so checkpoint field order is stable and documented.
using Json = nlohmann::ordered_json;

inline void write_text_atomic(const std::string& path, const std::string& text) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + tmp.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --- MLP / optimizer / spectral-norm records -------------------------------
// Field order: layer_sizes, activation, weights, biases, spectral_norm_mask.
// Weights and biases are flat row-major arrays per layer. Doubles are written
// with shortest round-trip formatting, so the round trip is bit-exact.

inline Json mlp_to_json(const MlpParams& p) {
    Json j;
    j["layer_sizes"] = p.layer_sizes;
    j["activation"] = "relu";
    Json weights = Json::array();
    for (const auto& w : p.weights) weights.push_back(w.data);
    j["weights"] = std::move(weights);
    Json biases = Json::array();
    for (const auto& b : p.biases) biases.push_back(b);
    j["biases"] = std::move(biases);
    j["spectral_norm_mask"] = p.spectral_norm_mask;
    return j;
}

inline MlpParams mlp_from_json(const Json& j) {
    MlpParams p;
    try {
        p.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        if (j.at("activation").get<std::string>() != "relu")
            throw FormatError("unknown activation tag");
        if (p.layer_sizes.size() < 2) throw FormatError("layer_sizes too short");
        const auto& weights = j.at("weights");
        const auto& biases = j.at("biases");
        if (weights.size() + 1 != p.layer_sizes.size() || biases.size() != weights.size())
            throw FormatError("layer count mismatch");
        for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
            Matrix w(p.layer_sizes[l + 1], p.layer_sizes[l]);
            w.data = weights.at(l).get<std::vector<double>>();
            if (w.data.size() != w.rows * w.cols) throw FormatError("weight size mismatch");
            p.weights.push_back(std::move(w));
            auto b = biases.at(l).get<std::vector<double>>();
            if (b.size() != p.layer_sizes[l + 1]) throw FormatError("bias size mismatch");
            p.biases.push_back(std::move(b));
        }
        p.spectral_norm_mask = j.at("spectral_norm_mask").get<std::vector<std::uint8_t>>();
        if (p.spectral_norm_mask.size() != p.weights.size())
            throw FormatError("spectral_norm_mask length mismatch");
    } catch (const Json::exception& e) {
        throw FormatError(std::string("bad mlp record: ") + e.what());
    }
    return p;
}

inline Json adam_to_json(const AdamState& st) {
    Json j;
    j["learning_rate"] = st.learning_rate;
    j["beta1"] = st.beta1;
    j["beta2"] = st.beta2;
    j["epsilon"] = st.epsilon;
    j["step_count"] = st.step_count;
    Json mw = Json::array(), vw = Json::array(), mb = Json::array(), vb = Json::array();
    for (const auto& m : st.m_weights) mw.push_back(m.data);
    for (const auto& m : st.v_weights) vw.push_back(m.data);
    for (const auto& m : st.m_biases) mb.push_back(m);
    for (const auto& m : st.v_biases) vb.push_back(m);
    j["first_moment_weights"] = std::move(mw);
    j["second_moment_weights"] = std::move(vw);
    j["first_moment_biases"] = std::move(mb);
    j["second_moment_biases"] = std::move(vb);
    return j;
}

inline AdamState adam_from_json(const Json& j, const MlpParams& ref) {
    AdamState st = make_adam(ref, 1e-4);
    try {
        st.learning_rate = j.at("learning_rate").get<double>();
        st.beta1 = j.at("beta1").get<double>();
        st.beta2 = j.at("beta2").get<double>();
        st.epsilon = j.at("epsilon").get<double>();
        st.step_count = j.at("step_count").get<std::uint64_t>();
        const auto& mw = j.at("first_moment_weights");
        const auto& vw = j.at("second_moment_weights");
        const auto& mb = j.at("first_moment_biases");
        const auto& vb = j.at("second_moment_biases");
        if (mw.size() != ref.weights.size() || vw.size() != ref.weights.size() ||
            mb.size() != ref.weights.size() || vb.size() != ref.weights.size())
            throw FormatError("adam moment layer count mismatch");
        for (std::size_t l = 0; l < ref.weights.size(); ++l) {
            st.m_weights[l].data = mw.at(l).get<std::vector<double>>();
            st.v_weights[l].data = vw.at(l).get<std::vector<double>>();
            st.m_biases[l] = mb.at(l).get<std::vector<double>>();
            st.v_biases[l] = vb.at(l).get<std::vector<double>>();
            if (st.m_weights[l].data.size() != ref.weights[l].data.size() ||
                st.v_weights[l].data.size() != ref.weights[l].data.size() ||
                st.m_biases[l].size() != ref.biases[l].size() ||
                st.v_biases[l].size() != ref.biases[l].size())
                throw FormatError("adam moment size mismatch at layer " + std::to_string(l));
        }
    } catch (const Json::exception& e) {
        throw FormatError(std::string("bad adam record: ") + e.what());
    }
    return st;
}

inline Json spectral_norm_to_json(const std::vector<SpectralNormState>& states) {
    Json arr = Json::array();
    for (const auto& st : states) {
        Json j;
        j["u"] = st.u;
        j["v"] = st.v;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline std::vector<SpectralNormState> spectral_norm_from_json(const Json& arr) {
    std::vector<SpectralNormState> states;
    try {
        for (const auto& j : arr) {
            SpectralNormState st;
            st.u = j.at("u").get<std::vector<double>>();
            st.v = j.at("v").get<std::vector<double>>();
            states.push_back(std::move(st));
        }
    } catch (const Json::exception& e) {
        throw FormatError(std::string("bad spectral norm record: ") + e.what());
    }
    return states;
}

// --- Versioned checkpoint envelope -----------------------------------------
// Top-level order: format, version, kind, then payload fields.

constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const std::string& kind, const Json& payload) {
    Json j;
    j["format"] = "r2r-checkpoint";
    j["version"] = kCheckpointVersion;
    j["kind"] = kind;
    for (const auto& [key, value] : payload.items()) j[key] = value;
    write_text_atomic(path, j.dump() + "\n");
}

inline Json load_checkpoint(const std::string& path, const std::string& kind) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
    if (!j.is_object() || j.value("format", std::string()) != "r2r-checkpoint")
        throw FormatError("not a checkpoint file: " + path);
    if (j.value("version", -1) != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version in " + path);
    if (j.value("kind", std::string()) != kind)
        throw FormatError("checkpoint kind mismatch in " + path + ": expected " + kind +
                          ", found " + j.value("kind", std::string("<missing>")));
    return j;
}

}  // namespace r2r
