import typer

from . import affine_delta, affine_s, rb, snapshots, validate

router = typer.Typer()

router.command("snapshots")(snapshots.cmd_snapshots)
router.command("affine-delta")(affine_delta.cmd_affine_delta)
router.command("affine-s")(affine_s.cmd_affine_s)
router.command("rb")(rb.cmd_rb)
router.command("validate")(validate.cmd_validate)
