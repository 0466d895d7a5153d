"""Command-line wrapper: archive in, JSONL + manifest out."""

from __future__ import annotations

import sys

import click

from .export import export


@click.command("nb201-export")
@click.argument("archive", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--datasets", default="cifar10", show_default=True,
              help="comma-separated dataset names")
@click.option("--loss-epochs", type=int, default=3, show_default=True,
              help="number of leading training losses to export (>= 3)")
@click.option("--accuracy", type=click.Choice(["test", "valid"]),
              default="test", show_default=True,
              help="which accuracy series is the ground truth")
def cli(archive, out_path, datasets, loss_epochs, accuracy):
    """Convert a NAS-Bench-201 archive to benchmark JSONL."""
    manifest = export(archive, out_path,
                      datasets=tuple(d.strip()
                                     for d in datasets.split(",") if d.strip()),
                      loss_epochs=loss_epochs, accuracy=accuracy)
    click.echo(f"wrote {manifest.record_count} records "
               f"({len(manifest.excluded)} excluded) to {out_path}", err=True)


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except SystemExit:
        raise
    except Exception as exc:  # one-line machine-parseable failure reason
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
