import pytest
import torch


@pytest.fixture(autouse=True)
def _restore_torch_global_state():
    # the CLI's --deterministic flag flips process-wide torch settings
    deterministic = torch.are_deterministic_algorithms_enabled()
    threads = torch.get_num_threads()
    yield
    torch.use_deterministic_algorithms(deterministic)
    torch.set_num_threads(threads)
