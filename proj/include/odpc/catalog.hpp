/* Copyright 2026 The ODPC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <string>
#include <vector>

namespace odpc::catalog {

inline const std::vector<std::string>& cifar10() {
  static const std::vector<std::string> names = {
      "airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};
  return names;
}

inline const std::vector<std::string>& cifar10_non_animal() {
  static const std::vector<std::string> names = {"airplane", "automobile", "ship", "truck"};
  return names;
}

inline const std::vector<std::string>& cifar100() {
  static const std::vector<std::string> names = {
      "apple", "aquarium_fish", "baby", "bear", "beaver", "bed", "bee", "beetle", "bicycle", "bottle",
      "bowl", "boy", "bridge", "bus", "butterfly", "camel", "can", "castle", "caterpillar", "cattle",
      "chair", "chimpanzee", "clock", "cloud", "cockroach", "couch", "crab", "crocodile", "cup", "dinosaur",
      "dolphin", "elephant", "flatfish", "forest", "fox", "girl", "hamster", "house", "kangaroo", "keyboard",
      "lamp", "lawn_mower", "leopard", "lion", "lizard", "lobster", "man", "maple_tree", "motorcycle", "mountain",
      "mouse", "mushroom", "oak_tree", "orange", "orchid", "otter", "palm_tree", "pear", "pickup_truck", "pine_tree",
      "plain", "plate", "poppy", "porcupine", "possum", "rabbit", "raccoon", "ray", "road", "rocket",
      "rose", "sea", "seal", "shark", "shrew", "skunk", "skyscraper", "snail", "snake", "spider",
      "squirrel", "streetcar", "sunflower", "sweet_pepper", "table", "tank", "telephone", "television", "tiger", "tractor",
      "train", "trout", "tulip", "turtle", "wardrobe", "whale", "willow_tree", "wolf", "woman", "worm"};
  return names;
}

/// CIFAR-100 classes from the animal superclasses (aquatic mammals, fish,
/// insects, large carnivores, large omnivores/herbivores, medium mammals,
/// non-insect invertebrates, people, reptiles, small mammals): 50 classes.
inline const std::vector<std::string>& cifar100_animals() {
  static const std::vector<std::string> names = {
      "beaver", "dolphin", "otter", "seal", "whale",
      "aquarium_fish", "flatfish", "ray", "shark", "trout",
      "bee", "beetle", "butterfly", "caterpillar", "cockroach",
      "bear", "leopard", "lion", "tiger", "wolf",
      "camel", "cattle", "chimpanzee", "elephant", "kangaroo",
      "fox", "porcupine", "possum", "raccoon", "skunk",
      "crab", "lobster", "snail", "spider", "worm",
      "baby", "boy", "girl", "man", "woman",
      "crocodile", "dinosaur", "lizard", "snake", "turtle",
      "hamster", "mouse", "rabbit", "shrew", "squirrel"};
  return names;
}

}  // namespace odpc::catalog
