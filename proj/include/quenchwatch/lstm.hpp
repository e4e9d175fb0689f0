#ifndef QUENCHWATCH_LSTM_HPP
#define QUENCHWATCH_LSTM_HPP

#include "quenchwatch/lstm/backward.hpp"
#include "quenchwatch/lstm/forward.hpp"
#include "quenchwatch/lstm/gate.hpp"
#include "quenchwatch/lstm/gradcheck.hpp"
#include "quenchwatch/lstm/params.hpp"
#include "quenchwatch/lstm/snapshot.hpp"
#include "quenchwatch/lstm/train.hpp"

#endif // QUENCHWATCH_LSTM_HPP
