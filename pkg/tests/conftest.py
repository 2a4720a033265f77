import pytest

from crel import cli, core, synth


@pytest.fixture(scope="session")
def demo_workspace(tmp_path_factory):
    """Demo conversations, gold, KB, and overfit model checkpoints, built
    once through the CLI and shared read-only across tests."""
    tmp = tmp_path_factory.mktemp("demo")
    convs = synth.demo_conversations()
    gold = synth.demo_gold()
    core.write_conversations(tmp / "conversations.json", convs)
    core.write_annotations(tmp / "gold.json", gold)
    synth.write_demo_kb(tmp / "kb")

    assert cli.main([
        "train-md", "--conversations", str(tmp / "conversations.json"),
        "--gold", str(tmp / "gold.json"), "--dim", "32", "--layers", "1",
        "--epochs", "150", "--lr", "0.05", "--seed", "0",
        "--out", str(tmp / "md.ckpt"),
        "--encoder-out", str(tmp / "enc.ckpt")]) == 0
    assert cli.main([
        "train-pel", "--conversations", str(tmp / "conversations.json"),
        "--gold", str(tmp / "gold.json"), "--encoder", str(tmp / "enc.ckpt"),
        "--freeze-encoder", "--epochs", "150", "--lr", "0.02", "--seed", "0",
        "--out", str(tmp / "pel.ckpt")]) == 0
    assert cli.main([
        "train-ed", "--conversations", str(tmp / "conversations.json"),
        "--gold", str(tmp / "gold.json"), "--kb", str(tmp / "kb"),
        "--out", str(tmp / "ed.json")]) == 0
    return tmp
