#include "neuroagent/toolbox/handles.hpp"

namespace neuroagent::toolbox {

std::string to_string(ObjectKind k) {
    switch (k) {
        case ObjectKind::Image: return "image";
        case ObjectKind::Mask: return "mask";
        case ObjectKind::Report: return "report";
    }
    return "unknown";
}

nlohmann::json ObjectHandle::to_json() const {
    return {{"id", id}, {"kind", to_string(kind)}, {"origin", origin}};
}

ObjectHandle HandleStore::next(ObjectKind kind, const std::string& origin) {
    return ObjectHandle{peek_next_id(), kind, origin};
}

std::string HandleStore::peek_next_id() const { return "obj_" + std::to_string(objects_.size() + 1); }

ObjectHandle HandleStore::put_image(std::shared_ptr<const volume::VoxelVolume> v, const std::string& origin) {
    StoredObject o;
    o.handle = next(ObjectKind::Image, origin);
    o.image = std::move(v);
    objects_.push_back(std::move(o));
    return objects_.back().handle;
}

ObjectHandle HandleStore::put_mask(std::shared_ptr<const volume::LabelMask> m, const std::string& origin) {
    StoredObject o;
    o.handle = next(ObjectKind::Mask, origin);
    o.mask = std::move(m);
    objects_.push_back(std::move(o));
    return objects_.back().handle;
}

ObjectHandle HandleStore::put_report(std::string text, std::string path, const std::string& origin) {
    StoredObject o;
    o.handle = next(ObjectKind::Report, origin);
    o.report = std::move(text);
    o.report_path = std::move(path);
    objects_.push_back(std::move(o));
    return objects_.back().handle;
}

const StoredObject* HandleStore::find(const std::string& id) const {
    if (id.rfind("obj_", 0) != 0 || id.size() <= 4) return nullptr;
    std::size_t n = 0;
    for (std::size_t i = 4; i < id.size(); ++i) {
        if (id[i] < '0' || id[i] > '9') return nullptr;
        n = n * 10 + static_cast<std::size_t>(id[i] - '0');
        if (n > objects_.size()) return nullptr;
    }
    if (n == 0 || std::to_string(n) != id.substr(4)) return nullptr;
    return &objects_[n - 1];
}

}  // namespace neuroagent::toolbox
