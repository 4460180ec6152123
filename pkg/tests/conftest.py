import pytest
from hypothesis import settings

from tapfed.group_math import GroupParams, gen_group

settings.register_profile("tapfed", derandomize=True, deadline=None, max_examples=60)
settings.load_profile("tapfed")


def sieve(limit):
    flags = bytearray([1]) * (limit + 1)
    flags[0:2] = b"\x00\x00"
    for i in range(2, int(limit ** 0.5) + 1):
        if flags[i]:
            flags[i * i::i] = bytearray(len(flags[i * i::i]))
    return flags


# p = 1019 is prime and 2039 = 2p + 1 is prime; g = 4 = 2^2 is a residue of order p
TINY = GroupParams(modulus_q=2039, order_p=1019, generator_g=4, lambda_bits=10)


@pytest.fixture(scope="session")
def g32():
    return gen_group(32, seed=7)


@pytest.fixture(scope="session")
def g64():
    return gen_group(64, seed=3)


@pytest.fixture
def tiny():
    return TINY


ACCEPTANCE = []


def record_acceptance(number, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f" ({detail})" if detail else "")
    print(line)
    ACCEPTANCE.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
