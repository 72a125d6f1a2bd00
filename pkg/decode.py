"""User-side reconstruction of the desired message from server answers"""

import logging
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

from gf import concat, to_ints
from mds import CodewordIntegrityError, InsufficientDataError, complete_codeword
from scheme import CompletionStep, DecodingScript, MdsAllocation, RecoveryStep, SessionSecrets

logger = logging.getLogger(__name__)


class DecodeIntegrityError(Exception):
    """Answers are incomplete or inconsistent with the decoding script"""
    pass


@dataclass(frozen=True)
class RecoveredMessage:
    theta: int
    symbols: object
    blocks: Tuple[Tuple[int, int], ...]

    def __len__(self):
        return len(self.symbols)

    def to_dict(self, order=None):
        theta = order[self.theta] if order is not None else self.theta
        return {
            'theta': str(theta + 1),
            'symbols': [str(value) for value in to_ints(self.symbols)],
            'blocks': [[str(start), str(stop)] for start, stop in self.blocks],
        }


def _answer(answers, server, position):
    try:
        return answers[server][position]
    except IndexError:
        raise DecodeIntegrityError(f"missing answer for server {server + 1}, slot {position + 1}")


def execute_script(script: DecodingScript, answers: Sequence, secrets: SessionSecrets, allocation: MdsAllocation):
    """
    Run one iteration's script over the per-server answer vectors and return
    the U_θ fresh symbols W'_θ = S_θ W_θ (before unscrambling).
    """
    if secrets.theta != script.theta or allocation.theta != script.theta:
        raise DecodeIntegrityError("script, secrets and allocation disagree on theta")
    desired = secrets.scramblers[script.theta]
    field_class = type(desired)
    size = desired.shape[0]
    if script.fresh_count != size:
        raise DecodeIntegrityError(f"script recovers {script.fresh_count} symbols, sub-packet has {size}")

    codewords: Dict[tuple, object] = {}
    fresh = field_class.Zeros(size)
    filled = set()
    for step in script.steps:
        if isinstance(step, CompletionStep):
            generator = allocation.generator(step.code)
            known = {coordinate: int(_answer(answers, server, position)) for coordinate, server, position in step.known}
            try:
                codewords[step.code] = complete_codeword(generator, known)
            except (InsufficientDataError, CodewordIntegrityError) as e:
                raise DecodeIntegrityError(f"completing code {step.code}: {e}")
        elif isinstance(step, RecoveryStep):
            value = _answer(answers, step.server, step.position)
            if step.interference is not None:
                code, coordinate = step.interference
                if code not in codewords:
                    raise DecodeIntegrityError(f"parity of code {code} needed before it was completed")
                value = value - codewords[code][coordinate]
            fresh[step.theta_index] = value
            filled.add(step.theta_index)

    if len(filled) != size:
        raise DecodeIntegrityError(f"script filled {len(filled)} of {size} fresh symbols")
    return fresh


def recover_message(transcript, secrets: Sequence[SessionSecrets]) -> RecoveredMessage:
    """
    Decode every iteration and unscramble blockwise. Reads only the
    transcript's answers and the user's own secrets, never the message store.
    """
    field = transcript.spec.field
    theta = transcript.theta
    if len(secrets) != len(transcript.iterations):
        raise DecodeIntegrityError(f"{len(secrets)} secret sets for {len(transcript.iterations)} iterations")

    blocks = []
    ranges = []
    for iteration, (record, session_secrets) in enumerate(zip(transcript.iterations, secrets)):
        fresh = execute_script(transcript.script, record.answers, session_secrets, transcript.allocation)
        inverse = session_secrets.inverses[theta]
        if inverse.shape != (len(fresh), len(fresh)):
            raise DecodeIntegrityError(f"inverse scrambler for iteration {iteration} has shape {inverse.shape}")
        block = inverse @ fresh
        start = iteration * len(fresh)
        blocks.append(block)
        ranges.append((start, start + len(fresh)))

    symbols = concat(field, blocks)
    if len(symbols) != transcript.spec.lengths[theta]:
        raise DecodeIntegrityError(f"recovered {len(symbols)} symbols, message has {transcript.spec.lengths[theta]}")
    logger.debug(f"Recovered message {theta + 1}: {len(symbols)} symbols in {len(blocks)} blocks")
    return RecoveredMessage(theta=theta, symbols=symbols, blocks=tuple(ranges))
