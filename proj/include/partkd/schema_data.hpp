// Copyright 2026 The partkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Built-in skeleton schema documents. Each document also ships as a file
// under resources/schemas/; a unit test keeps the two copies identical.
// New schemas can be registered at runtime from files of the same format
// without touching this header.

#include <array>
#include <string_view>

namespace partkd::detail {

inline constexpr std::string_view k_schema_kinect25 = R"JSON({
  "schema_id": "kinect25",
  "dims": 3,
  "center_joint": 20,
  "joints": [
    "spine_base", "spine_mid", "neck", "head",
    "shoulder_left", "elbow_left", "wrist_left", "hand_left",
    "shoulder_right", "elbow_right", "wrist_right", "hand_right",
    "hip_left", "knee_left", "ankle_left", "foot_left",
    "hip_right", "knee_right", "ankle_right", "foot_right",
    "spine_shoulder", "handtip_left", "thumb_left", "handtip_right", "thumb_right"
  ],
  "edges": [
    [0, 1], [1, 20], [2, 20], [3, 2],
    [4, 20], [5, 4], [6, 5], [7, 6],
    [8, 20], [9, 8], [10, 9], [11, 10],
    [12, 0], [13, 12], [14, 13], [15, 14],
    [16, 0], [17, 16], [18, 17], [19, 18],
    [21, 7], [22, 7], [23, 11], [24, 11]
  ],
  "parts": {
    "head": [0, 1, 2, 3, 20],
    "left_arm": [4, 5, 6, 7, 21, 22],
    "right_arm": [8, 9, 10, 11, 23, 24],
    "left_leg": [12, 13, 14, 15],
    "right_leg": [16, 17, 18, 19]
  }
}
)JSON";

inline constexpr std::string_view k_schema_coco17 = R"JSON({
  "schema_id": "coco17",
  "dims": 2,
  "center_joint": 0,
  "joints": [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hip", "right_hip", "left_knee", "right_knee",
    "left_ankle", "right_ankle"
  ],
  "edges": [
    [15, 13], [13, 11], [16, 14], [14, 12], [11, 12],
    [5, 11], [6, 12], [5, 6], [5, 7], [6, 8],
    [7, 9], [8, 10], [1, 2], [0, 1], [0, 2],
    [1, 3], [2, 4], [3, 5], [4, 6]
  ],
  "parts": {
    "head": [0, 1, 2, 3, 4],
    "left_arm": [5, 7, 9],
    "right_arm": [6, 8, 10],
    "left_leg": [11, 13, 15],
    "right_leg": [12, 14, 16]
  }
}
)JSON";

inline constexpr std::string_view k_schema_kinect20 = R"JSON({
  "schema_id": "kinect20",
  "dims": 3,
  "center_joint": 1,
  "joints": [
    "hip_center", "spine", "shoulder_center", "head",
    "shoulder_left", "elbow_left", "wrist_left", "hand_left",
    "shoulder_right", "elbow_right", "wrist_right", "hand_right",
    "hip_left", "knee_left", "ankle_left", "foot_left",
    "hip_right", "knee_right", "ankle_right", "foot_right"
  ],
  "edges": [
    [0, 1], [1, 2], [2, 3],
    [2, 4], [4, 5], [5, 6], [6, 7],
    [2, 8], [8, 9], [9, 10], [10, 11],
    [0, 12], [12, 13], [13, 14], [14, 15],
    [0, 16], [16, 17], [17, 18], [18, 19]
  ],
  "parts": {
    "head": [0, 1, 2, 3],
    "left_arm": [4, 5, 6, 7],
    "right_arm": [8, 9, 10, 11],
    "left_leg": [12, 13, 14, 15],
    "right_leg": [16, 17, 18, 19]
  }
}
)JSON";

inline constexpr std::string_view k_schema_penn13 = R"JSON({
  "schema_id": "penn13",
  "dims": 2,
  "center_joint": 0,
  "joints": [
    "head",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hip", "right_hip", "left_knee", "right_knee",
    "left_ankle", "right_ankle"
  ],
  "edges": [
    [0, 1], [0, 2],
    [1, 3], [3, 5], [2, 4], [4, 6],
    [1, 7], [2, 8], [7, 8],
    [7, 9], [9, 11], [8, 10], [10, 12]
  ],
  "parts": {
    "head": [0],
    "left_arm": [1, 3, 5],
    "right_arm": [2, 4, 6],
    "left_leg": [7, 9, 11],
    "right_leg": [8, 10, 12]
  }
}
)JSON";

inline constexpr std::string_view k_schema_synth16 = R"JSON({
  "schema_id": "synth16",
  "dims": 3,
  "center_joint": 1,
  "joints": [
    "pelvis", "spine", "neck", "head",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_hip", "left_knee", "left_ankle",
    "right_hip", "right_knee", "right_ankle"
  ],
  "edges": [
    [0, 1], [1, 2], [2, 3],
    [2, 4], [4, 5], [5, 6],
    [2, 7], [7, 8], [8, 9],
    [0, 10], [10, 11], [11, 12],
    [0, 13], [13, 14], [14, 15]
  ],
  "parts": {
    "head": [0, 1, 2, 3],
    "left_arm": [4, 5, 6],
    "right_arm": [7, 8, 9],
    "left_leg": [10, 11, 12],
    "right_leg": [13, 14, 15]
  }
}
)JSON";

inline constexpr std::array<std::string_view, 5> k_builtin_schemas = {
    k_schema_kinect25,
    k_schema_coco17,
    k_schema_kinect20,
    k_schema_penn13,
    k_schema_synth16,
};

}  // namespace partkd::detail
