#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuroagent/volume/components.hpp"
#include "neuroagent/volume/volume.hpp"

namespace neuroagent::toolbox {

enum class ObjectKind { Image, Mask, Report };
std::string to_string(ObjectKind k);

struct ObjectHandle {
    std::string id;      // "obj_1", "obj_2", ...
    ObjectKind kind = ObjectKind::Image;
    std::string origin;  // producing tool

    nlohmann::json to_json() const;
    bool operator==(const ObjectHandle&) const = default;
};

// Dereferenced handle. Exactly one of image / mask / report is populated.
struct StoredObject {
    ObjectHandle handle;
    std::shared_ptr<const volume::VoxelVolume> image;
    std::shared_ptr<const volume::LabelMask> mask;
    std::string report;       // report text (CSV for volume tables)
    std::string report_path;  // where the report was written, if anywhere
    // Lazily computed instances of a mask; objects are immutable so this never goes stale.
    mutable std::shared_ptr<const volume::ComponentSet> components;
};

// Per-episode object store. Ids are sequential and never reused.
// Not thread-safe: a store belongs to a single episode worker.
class HandleStore {
public:
    ObjectHandle put_image(std::shared_ptr<const volume::VoxelVolume> v, const std::string& origin);
    ObjectHandle put_mask(std::shared_ptr<const volume::LabelMask> m, const std::string& origin);
    ObjectHandle put_report(std::string text, std::string path, const std::string& origin);

    // nullptr for ids never issued.
    const StoredObject* find(const std::string& id) const;
    std::size_t size() const { return objects_.size(); }
    // Id the next put will return.
    std::string peek_next_id() const;

private:
    ObjectHandle next(ObjectKind kind, const std::string& origin);
    std::vector<StoredObject> objects_;
};

}  // namespace neuroagent::toolbox
