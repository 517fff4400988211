"""Multicast group key management over orthogonal systems of vectors.

The server hides a secret orthogonal basis e_1..e_n of F_p^m and scalars
x_i; member i holds v_i = x_i e_i. A rekey broadcasts c = s * sum x_i e_i
and each member recovers s = <c, v_i> / <v_i, v_i>.
"""

from .auth import AuthChallenge, AuthResponse, answer_challenge, make_challenge, verify_response
from .errors import OkmpError
from .ffield import INTEGERS, M61, Fe, IntegerRing, PrimeField, is_prime
from .gkm import (GroupState, MemberKey, OpCounter, RekeyMessage, decode_with, init_group,
                  worked_example_group, recover_secret)
from .ortholin import (FVector, OrthogonalSystem, advise_params, gen_orthogonal_system, inner,
                       tuple_count_log2, verify_orthogonal)
from .rand import SecureRandom, SeededRandom, from_env

__version__ = "0.1.0"

__all__ = [
    "AuthChallenge", "AuthResponse", "FVector", "Fe", "GroupState", "INTEGERS", "IntegerRing",
    "M61", "MemberKey", "OkmpError", "OpCounter", "OrthogonalSystem", "PrimeField",
    "RekeyMessage", "SecureRandom", "SeededRandom", "advise_params", "answer_challenge",
    "decode_with", "from_env", "gen_orthogonal_system", "init_group", "inner", "is_prime",
    "make_challenge", "worked_example_group", "recover_secret", "tuple_count_log2",
    "verify_orthogonal", "verify_response",
]
