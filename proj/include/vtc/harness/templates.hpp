#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/model/vocabulary.hpp"

namespace vtc {

/// Query -> candidate modality combinations. I = image grid, T = text,
/// IT = both, VD = visual document (an image grid standing in for a page).
enum class TaskClass { T2T, I2I, T2I, I2T, IT2I, IT2T, T2IT, IT2IT, T2VD };

inline constexpr std::array<TaskClass, 9> kAllTaskClasses = {TaskClass::T2T,  TaskClass::I2I,  TaskClass::T2I,
                                                             TaskClass::I2T,  TaskClass::IT2I, TaskClass::IT2T,
                                                             TaskClass::T2IT, TaskClass::IT2IT, TaskClass::T2VD};

inline const char* task_class_name(TaskClass t) {
  switch (t) {
    case TaskClass::T2T: return "T->T";
    case TaskClass::I2I: return "I->I";
    case TaskClass::T2I: return "T->I";
    case TaskClass::I2T: return "I->T";
    case TaskClass::IT2I: return "IT->I";
    case TaskClass::IT2T: return "IT->T";
    case TaskClass::T2IT: return "T->IT";
    case TaskClass::IT2IT: return "IT->IT";
    case TaskClass::T2VD: return "T->VD";
  }
  return "?";
}

inline TaskClass parse_task_class(std::string_view name) {
  for (TaskClass t : kAllTaskClasses) {
    if (name == task_class_name(t)) return t;
  }
  throw ConfigError("unknown task class '" + std::string(name) + "'");
}

struct Modality {
  bool image = false;
  bool text = false;
};

inline Modality query_modality(TaskClass t) {
  switch (t) {
    case TaskClass::T2T:
    case TaskClass::T2I:
    case TaskClass::T2IT:
    case TaskClass::T2VD: return {false, true};
    case TaskClass::I2I:
    case TaskClass::I2T: return {true, false};
    default: return {true, true};
  }
}

inline Modality candidate_modality(TaskClass t) {
  switch (t) {
    case TaskClass::T2T:
    case TaskClass::I2T:
    case TaskClass::IT2T: return {false, true};
    case TaskClass::I2I:
    case TaskClass::T2I:
    case TaskClass::IT2I:
    case TaskClass::T2VD: return {true, false};
    default: return {true, true};
  }
}

struct TemplateEntry {
  std::string task_id;
  std::string query_instruction;
  std::string target_instruction;
  std::string judgment_instruction;
};

/// Instruction strings keyed by task id.
class TemplateRegistry {
 public:
  static const TemplateRegistry& builtin() {
    static const TemplateRegistry r = make_builtin();
    return r;
  }

  void add(TemplateEntry e) {
    if (e.task_id.empty()) throw ConfigError("template entry without a task id");
    const std::string key = e.task_id;
    entries_[key] = std::move(e);
  }

  bool contains(const std::string& task_id) const { return entries_.count(task_id) > 0; }

  const TemplateEntry& at(const std::string& task_id) const {
    auto it = entries_.find(task_id);
    if (it == entries_.end()) throw ConfigError("no template for task '" + task_id + "'");
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, TemplateEntry>& entries() const { return entries_; }

 private:
  static TemplateRegistry make_builtin() {
    TemplateRegistry r;
    r.add({task_class_name(TaskClass::T2T), "Retrieve relevant texts based on a given query.",
           "Represent the given text.", "Determine whether the given text is relevant to the given query text."});
    r.add({task_class_name(TaskClass::I2I), "Find a image that looks similar to the provided image.",
           "Represent the given image.", "Determine whether the two given images are similar."});
    r.add({task_class_name(TaskClass::T2I), "Retrieve relevant images based on a given query.",
           "Represent the given image.", "Determine whether the given query text is relevant to the given image."});
    r.add({task_class_name(TaskClass::I2T), "Find an image caption describing the given image.",
           "Represent the given text.", "Determine whether the given text can serve as a caption for the given image."});
    r.add({task_class_name(TaskClass::IT2I),
           "Represent the given image with the given query and retrieve the related images.",
           "Represent the given image.",
           "Given a text instruction, a reference image, and a target image, determine whether the reference image "
           "transformed by the text instruction is relevant to the target image."});
    r.add({task_class_name(TaskClass::IT2T), "Represent the given image with the given query and retrieve the answer.",
           "Represent the given text.",
           "Given a reference image and a question, determine whether the provided answer is correct."});
    r.add({task_class_name(TaskClass::T2IT),
           "Find a related image and text content from Wikipedia that answers the given query.",
           "Represent the given Wikipedia image with related text information.",
           "Determine whether the query text is relevant to the given image-text mixed content."});
    r.add({task_class_name(TaskClass::IT2IT),
           "Retrieve a Wikipedia image-description pair that provides evidence for the given query.",
           "Represent the given image with related text information.",
           "Determine whether the given image-text mixed content is relevant to the given image-text query."});
    r.add({task_class_name(TaskClass::T2VD), "Retrieve relevant visual documents based on a given query.",
           "Represent the given visual documents.",
           "Determine whether the given query text is relevant to the given visual document image."});
    return r;
  }

  std::map<std::string, TemplateEntry> entries_;
};

}  // namespace vtc
