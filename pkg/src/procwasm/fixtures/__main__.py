"""Regenerate the checked-in fixture binaries: python3 -m procwasm.fixtures"""

from . import write_fixture_data

for name, rel, digest in write_fixture_data():
    print(f"{name} {rel} {digest}")
