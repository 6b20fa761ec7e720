"""PDF-Berichte für Auswertungen und Ablationen."""

import os
import tempfile
from datetime import datetime
from typing import Dict, Optional

import pandas as pd
from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import cm
from reportlab.platypus import Image, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from .plots import plot_metric_bars, plot_training_curve


class PDFReportGenerator:
    """Erzeugt PDF-Berichte mit Kennzahlen, Tabellen und Diagrammen."""

    def __init__(self):
        self.styles = getSampleStyleSheet()
        self._setup_custom_styles()

    def _setup_custom_styles(self):
        self.styles.add(ParagraphStyle(
            name='CustomTitle',
            parent=self.styles['Heading1'],
            fontSize=22,
            textColor=colors.HexColor('#1f4788'),
            spaceAfter=24,
            alignment=TA_CENTER,
            fontName='Helvetica-Bold'
        ))
        self.styles.add(ParagraphStyle(
            name='CustomHeading',
            parent=self.styles['Heading2'],
            fontSize=14,
            textColor=colors.HexColor('#1f4788'),
            spaceAfter=12,
            spaceBefore=12,
            fontName='Helvetica-Bold'
        ))
        self.styles.add(ParagraphStyle(
            name='CustomBody',
            parent=self.styles['Normal'],
            fontSize=10,
            spaceAfter=6
        ))

    def _get_table_style(self):
        return TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor('#1f4788')),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
            ('ALIGN', (0, 0), (-1, -1), 'CENTER'),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, 0), 10),
            ('FONTNAME', (0, 1), (-1, -1), 'Helvetica'),
            ('FONTSIZE', (0, 1), (-1, -1), 9),
            ('BOTTOMPADDING', (0, 0), (-1, -1), 6),
            ('TOPPADDING', (0, 0), (-1, -1), 6),
            ('GRID', (0, 0), (-1, -1), 1, colors.grey),
            ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.white, colors.HexColor('#f0f0f0')])
        ])

    def _header(self, title: str):
        return [
            Spacer(1, 0.5 * cm),
            Paragraph(title, self.styles['CustomTitle']),
            Paragraph(
                f"<para align='center'>Erstellt am: {datetime.now().strftime('%d.%m.%Y %H:%M')}</para>",
                self.styles['CustomBody']
            ),
            Spacer(1, 0.8 * cm),
        ]

    def _key_value_table(self, items: Dict[str, object]) -> Table:
        data = [[f"{k}:", _fmt(v)] for k, v in items.items()]
        table = Table(data, colWidths=[6 * cm, 10 * cm])
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (0, -1), colors.HexColor('#e8f4f8')),
            ('ALIGN', (0, 0), (0, -1), 'RIGHT'),
            ('FONTNAME', (0, 0), (0, -1), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, -1), 10),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.grey),
        ]))
        return table

    def _data_table(self, frame: pd.DataFrame, max_rows: int = 60) -> Table:
        shown = frame.head(max_rows)
        data = [list(shown.columns)] + [[_fmt(v) for v in row] for row in shown.itertuples(index=False)]
        table = Table(data, repeatRows=1)
        table.setStyle(self._get_table_style())
        return table

    def generate_evaluation_report(self, filepath: str, report, run_info: Dict[str, object] = None,
                                   training_log: Optional[str] = None) -> str:
        """
        PDF mit Mittelwerten, Einzelzeilen und (optional) Trainingsverlauf.

        Args:
            filepath: Ziel-PDF
            report: EvaluationReport
            run_info: zusätzliche Angaben (Checkpoint, Sampler, ...)
            training_log: Pfad zu train_log.jsonl
        """
        doc = SimpleDocTemplate(filepath, pagesize=A4, rightMargin=2 * cm, leftMargin=2 * cm,
                                topMargin=2 * cm, bottomMargin=2 * cm)
        story = self._header("Auswertung Quellentrennung")

        story.append(Paragraph("Zusammenfassung", self.styles['CustomHeading']))
        summary = dict(report.summary)
        summary.update(run_info or {})
        story.append(self._key_value_table(summary))

        temp_files = []
        if training_log and os.path.exists(training_log):
            curve = plot_training_curve(training_log, _temp_png())
            if curve:
                temp_files.append(curve)
                story.append(Paragraph("Trainingsverlauf", self.styles['CustomHeading']))
                story.append(Image(curve, width=16 * cm, height=8 * cm))

        story.append(Paragraph("Ergebnisse je Quelle", self.styles['CustomHeading']))
        columns = ["mixture_id", "source", "source_id", "label", "sdr", "sir", "sar"]
        story.append(self._data_table(report.rows[columns]))

        doc.build(story)
        _cleanup(temp_files)
        print(f"✅ PDF-Bericht gespeichert: {filepath}")
        return filepath

    def generate_ablation_report(self, filepath: str, table: pd.DataFrame) -> str:
        """PDF mit Ablationstabelle und Balkendiagramm je (Variante, Schritte)."""
        doc = SimpleDocTemplate(filepath, pagesize=A4, rightMargin=2 * cm, leftMargin=2 * cm,
                                topMargin=2 * cm, bottomMargin=2 * cm)
        story = self._header("Ablation: Blockvariante und Schrittzahl")

        story.append(Paragraph("Tabelle", self.styles['CustomHeading']))
        story.append(self._data_table(table))

        labeled = table.assign(group=table["variant"] + " / " + table["steps"].astype(str))
        chart = plot_metric_bars(labeled, "group", _temp_png(), "SDR/SIR/SAR je Konfiguration")
        story.append(Paragraph("Diagramm", self.styles['CustomHeading']))
        story.append(Image(chart, width=16 * cm, height=9 * cm))

        doc.build(story)
        _cleanup([chart])
        print(f"✅ PDF-Bericht gespeichert: {filepath}")
        return filepath


def generate_pdf_report(filepath: str, result, run_info: Dict[str, object] = None,
                        training_log: Optional[str] = None) -> str:
    """Bericht für einen EvaluationReport oder eine Ablationstabelle (DataFrame)."""
    generator = PDFReportGenerator()
    if isinstance(result, pd.DataFrame):
        return generator.generate_ablation_report(filepath, result)
    return generator.generate_evaluation_report(filepath, result, run_info, training_log)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def _temp_png() -> str:
    handle = tempfile.NamedTemporaryFile(delete=False, suffix='.png')
    handle.close()
    return handle.name


def _cleanup(paths):
    for path in paths:
        if path and os.path.exists(path):
            try:
                os.remove(path)
            except OSError:
                pass
