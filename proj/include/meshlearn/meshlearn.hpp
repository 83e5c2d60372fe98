#ifndef MESHLEARN_MESHLEARN_HPP
#define MESHLEARN_MESHLEARN_HPP

#include "meshlearn/core.hpp"
#include "meshlearn/dataset.hpp"
#include "meshlearn/neighborhood.hpp"
#include "meshlearn/mesh.hpp"
#include "meshlearn/pca.hpp"
#include "meshlearn/searchlight.hpp"
#include "meshlearn/classifiers/model.hpp"
#include "meshlearn/crossval.hpp"
#include "meshlearn/synthgen.hpp"

#endif  // MESHLEARN_MESHLEARN_HPP
