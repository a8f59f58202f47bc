#pragma once

#include "dexp/augment.hpp"
#include "dexp/conditioning.hpp"
#include "dexp/core/error.hpp"
#include "dexp/pose.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace dexp::io {

using nlohmann::json;

inline json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);
    try
    {
        return json::parse(in);
    }
    catch (const json::parse_error& e)
    {
        throw ValidationError("parse", path + ": " + e.what());
    }
}

inline void write_json(const std::string& path, const json& j)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
}

namespace detail {

template <typename T>
T get_field(const json& j, const char* key, const std::string& what)
{
    if (!j.is_object() || !j.contains(key))
        throw ValidationError("parse", what + ": missing key '" + key + "'");
    try
    {
        return j.at(key).get<T>();
    }
    catch (const json::exception&)
    {
        throw ValidationError("parse", what + ": key '" + key + "' has the wrong type");
    }
}

} // namespace detail

/// {"rotation": [9 row-major], "translation": [3], "scale": s}
inline json pose_to_json(const PoseRTS& p)
{
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            rot.push_back(p.rotation(r, c));
    return {{"rotation", rot},
            {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}},
            {"scale", p.scale}};
}

/// Parses and validates a pose object.
inline PoseRTS pose_from_json(const json& j, bool require_planar = false)
{
    const auto rot = detail::get_field<std::vector<double>>(j, "rotation", "pose");
    const auto t = detail::get_field<std::vector<double>>(j, "translation", "pose");
    if (rot.size() != 9)
        throw ValidationError("pose", "rotation must have 9 entries, got " + std::to_string(rot.size()));
    if (t.size() != 3)
        throw ValidationError("pose", "translation must have 3 entries, got " + std::to_string(t.size()));
    PoseRTS p;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            p.rotation(r, c) = rot[static_cast<std::size_t>(3 * r + c)];
    p.translation = {t[0], t[1], t[2]};
    p.scale = detail::get_field<double>(j, "scale", "pose");
    validate_pose(p, require_planar);
    return p;
}

inline PoseRTS load_pose(const std::string& path, bool require_planar = false)
{
    return pose_from_json(read_json(path), require_planar);
}

inline void save_pose(const std::string& path, const PoseRTS& p) { write_json(path, pose_to_json(p)); }

/**
 * {"points": {"name": [x, y], ...}, "groups": {"left_eye": ["name", ...], ...},
 *  "bbox": [x, y, w, h]}
 */
inline json landmarks_to_json(const LandmarkSet& lm)
{
    json points = json::object();
    for (const auto& p : lm.points)
        points[p.name] = {p.x, p.y};
    json groups = json::object();
    for (const auto& [name, idx] : lm.groups)
    {
        json names = json::array();
        for (auto i : idx)
            names.push_back(lm.points.at(i).name);
        groups[name] = names;
    }
    return {{"points", points}, {"groups", groups}, {"bbox", {lm.bbox.x, lm.bbox.y, lm.bbox.w, lm.bbox.h}}};
}

inline LandmarkSet landmarks_from_json(const json& j)
{
    LandmarkSet lm;
    const json& points = j.contains("points") ? j.at("points") : json();
    if (!points.is_object() || points.empty())
        throw ValidationError("landmarks", "landmark file needs a non-empty 'points' object");
    for (const auto& [name, xy] : points.items())
    {
        if (!xy.is_array() || xy.size() != 2 || !xy[0].is_number() || !xy[1].is_number())
            throw ValidationError("landmarks", "point '" + name + "' must be [x, y]");
        lm.points.push_back({name, xy[0].get<double>(), xy[1].get<double>()});
    }
    if (j.contains("groups"))
    {
        for (const auto& [group, names] : j.at("groups").items())
        {
            if (!names.is_array() || names.empty())
                throw ValidationError("landmarks", "group '" + group + "' is empty");
            auto& idx = lm.groups[group];
            for (const auto& n : names)
            {
                const auto name = n.get<std::string>();
                std::size_t k = 0;
                while (k < lm.points.size() && lm.points[k].name != name)
                    ++k;
                if (k == lm.points.size())
                    throw ValidationError("landmarks", "group '" + group + "' names unknown point '" + name + "'");
                idx.push_back(k);
            }
        }
    }
    const auto box = detail::get_field<std::vector<double>>(j, "bbox", "landmarks");
    if (box.size() != 4)
        throw ValidationError("landmarks", "bbox must be [x, y, w, h]");
    lm.bbox = {box[0], box[1], box[2], box[3]};
    return lm;
}

inline LandmarkSet load_landmarks(const std::string& path) { return landmarks_from_json(read_json(path)); }

inline void save_landmarks(const std::string& path, const LandmarkSet& lm)
{
    write_json(path, landmarks_to_json(lm));
}

/// {"gamma": [C], "beta": [C]}
inline StyleParams style_from_json(const json& j)
{
    StyleParams s{detail::get_field<std::vector<double>>(j, "gamma", "style"),
                  detail::get_field<std::vector<double>>(j, "beta", "style")};
    validate_style(s);
    return s;
}

inline json style_to_json(const StyleParams& s) { return {{"gamma", s.gamma}, {"beta", s.beta}}; }

inline StyleParams load_style(const std::string& path) { return style_from_json(read_json(path)); }

} // namespace dexp::io
